//! `fairgraph`: audits, constraint derivation, fitting, simulation and
//! validation for causal fairness models written in the `.cfm` language.
//!
//! Exit codes: 0 ok, 1 audit or test failure, 2 usage or input error,
//! 3 internal error.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "fairgraph", version, about = "Causal audits and non-discriminating predictors")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Output format. `simulate` defaults to CSV text, everything else to JSON.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads for sampling. Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Path audits: unresolved and potential proxy discrimination.
    Audit {
        file: PathBuf,
        /// Node to audit. Defaults to every predictor node.
        #[arg(long)]
        target: Vec<String>,
    },
    /// Derive the linear non-discrimination constraint for a predictor.
    Derive {
        file: PathBuf,
        #[arg(long, value_enum)]
        mode: DeriveMode,
        /// Predictor to constrain when the model declares several.
        #[arg(long)]
        predictor: Option<String>,
        /// Proxy to intervene on. Defaults to every proxy input.
        #[arg(long)]
        proxy: Vec<String>,
        /// Resolving node. Defaults to every node labelled resolving.
        #[arg(long)]
        resolving: Vec<String>,
        /// Reference coefficient `NODE=VALUE` for an intervened node.
        #[arg(long = "theta0", value_parser = commands::parse_assignment)]
        theta0: Vec<(String, String)>,
    },
    /// Fit a predictor by least squares subject to a constraint.
    Fit {
        file: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// A `derive` report or a bare `{theta_names, rows}` constraint.
        #[arg(long)]
        constraint: PathBuf,
        #[arg(long)]
        predictor: Option<String>,
        /// Target column. Defaults to the sole outcome node.
        #[arg(long)]
        outcome: Option<String>,
    },
    /// Sample the model, optionally under interventions, as CSV.
    Simulate {
        file: PathBuf,
        /// `NODE=VALUE` or `NODE=marginal`.
        #[arg(long = "do", value_parser = commands::parse_assignment, allow_hyphen_values = true)]
        interventions: Vec<(String, String)>,
        #[arg(short = 'n', long)]
        n: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Monte Carlo check that a predictor ignores interventions on a proxy.
    Validate {
        file: PathBuf,
        /// Predictor JSON as written by `fit`.
        #[arg(long)]
        predictor: PathBuf,
        #[arg(long, value_enum)]
        mode: ValidateMode,
        /// Intervened node. Defaults to the predictor's proxy or the sole proxy node.
        #[arg(long)]
        proxy: Option<String>,
        /// Intervention values; every pair is compared.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-1,1")]
        values: Vec<f64>,
        #[arg(short = 'n', long)]
        n: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Reproduce the two-graph indistinguishability construction.
    #[command(name = "repro-thm1")]
    ReproThm1 {
        #[arg(short = 'n', long)]
        n: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Test adjusted predictors with a proxy term `mu * P` over a grid of `mu`.
    Sweep {
        file: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        grid: Vec<f64>,
        #[arg(long, default_value = "identity")]
        link: fairgraph::estimator::Link,
        #[arg(short = 'n', long)]
        n: usize,
        #[arg(long)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DeriveMode {
    Proxy,
    Unresolved,
}

#[derive(Clone, Copy, ValueEnum)]
enum ValidateMode {
    Distribution,
    Individual,
    Expectation,
}

/// What a command produced: a JSON payload, its text rendering, and whether
/// the audit or test it ran passed.
pub(crate) struct Outcome {
    json: String,
    text: String,
    pass: bool,
    text_by_default: bool,
}

impl Outcome {
    pub fn new(json: String, text: String, pass: bool) -> Self {
        Outcome { json, text, pass, text_by_default: false }
    }

    pub fn text_by_default(mut self) -> Self {
        self.text_by_default = true;
        self
    }
}

pub(crate) enum Failure {
    /// Bad arguments or inputs, including DSL diagnostics.
    Input(Vec<String>),
    Internal(String),
}

impl Failure {
    pub fn input(msg: impl Into<String>) -> Self {
        Failure::Input(vec![msg.into()])
    }
}

/// Exit code and captured output of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandResult {
    pub code: u8,
    pub stdout: String,
    pub stderr: String,
}

impl CommandResult {
    fn error(code: u8, stderr: String) -> Self {
        CommandResult { code, stdout: String::new(), stderr }
    }
}

/// Runs one command line. `argv[0]` is the program name.
pub fn run<I, T>(argv: I) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let msg = e.render().to_string();
            return if e.use_stderr() {
                CommandResult::error(2, msg)
            } else {
                CommandResult { code: 0, stdout: msg, stderr: String::new() }
            };
        }
    };
    let format = cli.global.format;
    let command = cli.command;
    let result = match cli.global.threads {
        Some(0) => return CommandResult::error(2, "error: --threads must be positive\n".into()),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| std::panic::catch_unwind(|| commands::run(command))),
            Err(e) => return CommandResult::error(3, format!("internal error: {e}\n")),
        },
        None => std::panic::catch_unwind(|| commands::run(command)),
    };
    let outcome = match result {
        Ok(Ok(o)) => o,
        Ok(Err(Failure::Input(msgs))) => {
            return CommandResult::error(2, msgs.iter().map(|m| format!("{m}\n")).collect());
        }
        Ok(Err(Failure::Internal(m))) => return CommandResult::error(3, format!("internal error: {m}\n")),
        Err(_) => return CommandResult::error(3, "internal error: panic\n".into()),
    };
    let text = match format {
        Some(f) => f == Format::Text,
        None => outcome.text_by_default,
    };
    let mut stdout = if text { outcome.text } else { outcome.json };
    if !stdout.is_empty() && !stdout.ends_with('\n') {
        stdout.push('\n');
    }
    CommandResult { code: if outcome.pass { 0 } else { 1 }, stdout, stderr: String::new() }
}

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fairgraph::constraint::{
    derive_proxy_constraint, derive_unresolved_constraint, DerivationReport, HypothesisClass, LinearConstraint,
};
use fairgraph::dsl::load_model;
use fairgraph::estimator::{fit_constrained, FittedPredictor, PredictorForm};
use fairgraph::sem::do_sample;
use fairgraph::validator::{necessity_sweep, reproduce_theorem1, test_intervention_invariance, TestMode};
use fairgraph::{AuditVerdict, Intervention, NodeRole, SEModel, SampleMatrix};
use serde::Serialize;

use crate::{Command, DeriveMode, Failure, Outcome, ValidateMode};

/// `NAME=VALUE`, split at the first `=`.
pub fn parse_assignment(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() && !v.trim().is_empty() => {
            Ok((k.trim().to_string(), v.trim().to_string()))
        }
        _ => Err(format!("expected NAME=VALUE, got `{s}`")),
    }
}

pub fn run(cmd: Command) -> Result<Outcome, Failure> {
    match cmd {
        Command::Audit { file, target } => audit(&file, &target),
        Command::Derive { file, mode, predictor, proxy, resolving, theta0 } => {
            derive(&file, mode, predictor.as_deref(), &proxy, &resolving, &theta0)
        }
        Command::Fit { file, data, constraint, predictor, outcome } => {
            fit(&file, &data, &constraint, predictor.as_deref(), outcome.as_deref())
        }
        Command::Simulate { file, interventions, n, seed } => simulate(&file, &interventions, n, seed),
        Command::Validate { file, predictor, mode, proxy, values, n, seed } => {
            validate(&file, &predictor, mode, proxy.as_deref(), &values, n, seed)
        }
        Command::ReproThm1 { n, seed } => {
            let r = reproduce_theorem1(n, seed).map_err(input)?;
            Ok(Outcome::new(to_json(&r)?, r.to_text(), r.pass))
        }
        Command::Sweep { file, grid, link, n, seed } => {
            let m = model(&file)?;
            let r = necessity_sweep(&m, link, &grid, n, seed).map_err(input)?;
            Ok(Outcome::new(to_json(&r)?, r.to_text(), r.matches_expected))
        }
    }
}

fn input(e: impl std::fmt::Display) -> Failure {
    Failure::input(format!("error: {e}"))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map_err(|e| Failure::Internal(e.to_string()))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn model(path: &Path) -> Result<SEModel, Failure> {
    let text = read(path)?;
    let name = path.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
    load_model(&text, &name)
        .map_err(|diags| Failure::Input(diags.iter().map(|d| format!("{}:{d}", path.display())).collect()))
}

fn hypothesis<'a>(m: &'a SEModel, name: Option<&str>) -> Result<&'a HypothesisClass, Failure> {
    match name {
        Some(r) => m
            .hypothesis(r)
            .ok_or_else(|| Failure::input(format!("error: `{r}` has no predictor declaration"))),
        None => m.sole_hypothesis().map_err(input),
    }
}

#[derive(Serialize)]
struct TargetAudit {
    node: String,
    unresolved: AuditVerdict,
    potential_proxy: AuditVerdict,
}

#[derive(Serialize)]
struct UnawarenessCheck {
    predictor: String,
    /// Inputs once every proxy is dropped.
    inputs: Vec<String>,
    safe: bool,
}

#[derive(Serialize)]
struct AdjustmentCheck {
    proxy: String,
    feature: String,
    identifiable: bool,
}

#[derive(Serialize)]
struct AuditReport {
    model: String,
    targets: Vec<TargetAudit>,
    unawareness: Vec<UnawarenessCheck>,
    adjustment: Vec<AdjustmentCheck>,
    pass: bool,
}

fn audit(file: &Path, targets: &[String]) -> Result<Outcome, Failure> {
    let m = model(file)?;
    let g = m.graph();
    let targets: Vec<String> = if targets.is_empty() {
        let preds: Vec<String> = g.nodes_with_role(NodeRole::Predictor).into_iter().map(String::from).collect();
        if preds.is_empty() {
            return Err(Failure::input("error: the model has no predictor node; pass --target"));
        }
        preds
    } else {
        targets.to_vec()
    };
    let mut audits = Vec::new();
    for t in &targets {
        audits.push(TargetAudit {
            node: t.clone(),
            unresolved: g.unresolved_discrimination(t).map_err(input)?,
            potential_proxy: g.potential_proxy_discrimination(t).map_err(input)?,
        });
    }
    let mut unawareness = Vec::new();
    let mut adjustment = Vec::new();
    for h in m.hypotheses() {
        let is_proxy = |x: &String| g.role(x) == Ok(NodeRole::Proxy);
        let kept: Vec<String> = h.inputs.iter().filter(|x| !is_proxy(x)).cloned().collect();
        let safe = g.unawareness_safe(&kept).map_err(input)?;
        unawareness.push(UnawarenessCheck { predictor: h.predictor.clone(), inputs: kept.clone(), safe });
        for p in h.inputs.iter().filter(|x| is_proxy(x)) {
            for x in &kept {
                adjustment.push(AdjustmentCheck {
                    proxy: p.clone(),
                    feature: x.clone(),
                    identifiable: g.adjustment_identifiable(p, x).map_err(input)?,
                });
            }
        }
    }
    let pass = audits.iter().all(|a| !a.unresolved.verdict && !a.potential_proxy.verdict);
    let report = AuditReport { model: m.name().to_string(), targets: audits, unawareness, adjustment, pass };

    let mut s = String::new();
    let yes_no = |b: bool| if b { "yes" } else { "no" };
    for a in &report.targets {
        let _ = writeln!(
            s,
            "{}: unresolved discrimination {}, potential proxy discrimination {}",
            a.node,
            yes_no(a.unresolved.verdict),
            yes_no(a.potential_proxy.verdict)
        );
        for w in a.unresolved.witnesses.iter().chain(&a.potential_proxy.witnesses) {
            let _ = writeln!(s, "    {w}");
        }
    }
    for u in &report.unawareness {
        let _ = writeln!(
            s,
            "{} on ({}) without proxies: {}",
            u.predictor,
            u.inputs.join(", "),
            if u.safe { "no path from the protected node" } else { "still reachable from the protected node" }
        );
    }
    for a in &report.adjustment {
        let how = if a.identifiable { "E[X | P] suffices" } else { "needs E[X | do(P)]" };
        let _ = writeln!(s, "adjusting {} for {}: {how}", a.feature, a.proxy);
    }
    let _ = writeln!(s, "verdict: {}", if pass { "PASS" } else { "FAIL" });
    Ok(Outcome::new(to_json(&report)?, s, pass))
}

fn derive(
    file: &Path,
    mode: DeriveMode,
    predictor: Option<&str>,
    proxies: &[String],
    resolving: &[String],
    theta0: &[(String, String)],
) -> Result<Outcome, Failure> {
    let m = model(file)?;
    let h = hypothesis(&m, predictor)?;
    let report = match mode {
        DeriveMode::Proxy => {
            let proxies: Vec<String> = if proxies.is_empty() {
                let g = m.graph();
                h.inputs.iter().filter(|x| g.role(x) == Ok(NodeRole::Proxy)).cloned().collect()
            } else {
                proxies.to_vec()
            };
            if proxies.is_empty() {
                return Err(Failure::input(format!("error: `{}` has no proxy input; pass --proxy", h.predictor)));
            }
            let mut reference = HashMap::new();
            for (node, v) in theta0 {
                let v: f64 = v.parse().map_err(|_| Failure::input(format!("error: bad --theta0 value `{v}`")))?;
                reference.insert(node.clone(), v);
            }
            derive_proxy_constraint(&m, h, &proxies, &reference).map_err(input)?
        }
        DeriveMode::Unresolved => {
            if !theta0.is_empty() {
                return Err(Failure::input("error: --theta0 applies to proxy mode only"));
            }
            let resolving: Vec<String> = if resolving.is_empty() {
                m.graph().nodes_with_role(NodeRole::Resolving).into_iter().map(String::from).collect()
            } else {
                resolving.to_vec()
            };
            derive_unresolved_constraint(&m, h, &resolving).map_err(input)?
        }
    };
    Ok(Outcome::new(to_json(&report)?, derivation_text(&report), true))
}

fn derivation_text(r: &DerivationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "predictor {} over ({})", r.predictor, r.theta_names.join(", "));
    if r.constraint_rows.is_empty() {
        let _ = writeln!(s, "no constraint");
    }
    for row in &r.constraint_rows {
        let _ = writeln!(s, "constraint: {}", row.description);
    }
    let _ = writeln!(s, "expressible: {}", r.expressible);
    for (name, form) in &r.reparameterization {
        let _ = writeln!(s, "    {name} -> {form}");
    }
    for w in &r.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    for n in &r.notes {
        let _ = writeln!(s, "note: {n}");
    }
    s
}

fn read_constraint(path: &Path) -> Result<LinearConstraint, Failure> {
    let text = read(path)?;
    if let Ok(report) = serde_json::from_str::<DerivationReport>(&text) {
        return Ok(report.constraint());
    }
    serde_json::from_str::<LinearConstraint>(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn fit(
    file: &Path,
    data: &Path,
    constraint: &Path,
    predictor: Option<&str>,
    outcome: Option<&str>,
) -> Result<Outcome, Failure> {
    let m = model(file)?;
    let h = hypothesis(&m, predictor)?;
    let con = read_constraint(constraint)?;
    let csv = fs::File::open(data).map_err(|e| Failure::input(format!("{}: {e}", data.display())))?;
    let data = SampleMatrix::read_csv(csv, m.graph()).map_err(input)?;
    let y = match outcome {
        Some(y) => y.to_string(),
        None => match m.graph().nodes_with_role(NodeRole::Outcome).as_slice() {
            [y] => y.to_string(),
            _ => return Err(Failure::input("error: name the target column with --outcome")),
        },
    };
    let mut pred = fit_constrained(&data, h, &y, &con).map_err(input)?;
    // Rows read from disk carry no sampling seed.
    pred.training.seed = None;
    let mut s = String::new();
    for (name, v) in &pred.coefficients {
        let _ = writeln!(s, "{name:>16} {v:>14.6}");
    }
    if let Some(c) = &pred.constraint_check {
        let _ = writeln!(s, "max constraint violation: {:.3e}", c.max_violation);
    }
    if let Some(loss) = pred.training.loss {
        let _ = writeln!(s, "training mse: {loss:.6}  rows: {}", pred.training.n);
    }
    Ok(Outcome::new(pred.to_json(), s, true))
}

#[derive(Serialize)]
struct Simulation<'a> {
    model: &'a str,
    seed: u64,
    interventions: &'a [String],
    columns: &'a [String],
    rows: Vec<Vec<f64>>,
}

fn simulate(file: &Path, interventions: &[(String, String)], n: usize, seed: u64) -> Result<Outcome, Failure> {
    let m = model(file)?;
    let mut ivs = Vec::new();
    for (node, v) in interventions {
        let iv = if v == "marginal" {
            Intervention::Marginal
        } else {
            Intervention::Point(v.parse().map_err(|_| {
                Failure::input(format!("error: --do {node}={v}: expected a number or `marginal`"))
            })?)
        };
        ivs.push((node.as_str(), iv));
    }
    let data = do_sample(&m, &ivs, n, seed).map_err(input)?;
    let json = to_json(&Simulation {
        model: &data.provenance.model,
        seed: data.seed,
        interventions: &data.provenance.interventions,
        columns: data.columns(),
        rows: (0..data.nrows()).map(|i| data.row(i)).collect(),
    })?;
    Ok(Outcome::new(json, data.to_csv_string(), true).text_by_default())
}

fn validate(
    file: &Path,
    predictor: &Path,
    mode: ValidateMode,
    proxy: Option<&str>,
    values: &[f64],
    n: usize,
    seed: u64,
) -> Result<Outcome, Failure> {
    let m = model(file)?;
    let pred = FittedPredictor::from_json(&read(predictor)?)
        .map_err(|e| Failure::input(format!("{}: {e}", predictor.display())))?;
    let proxy = match (proxy, &pred.form) {
        (Some(p), _) => p.to_string(),
        (None, PredictorForm::Adjusted { proxy, .. } | PredictorForm::Expectation { proxy, .. }) => proxy.clone(),
        (None, PredictorForm::ConstrainedLinear { .. }) => match m.graph().nodes_with_role(NodeRole::Proxy).as_slice() {
            [p] => p.to_string(),
            _ => return Err(Failure::input("error: name the intervened node with --proxy")),
        },
    };
    let mode = match mode {
        ValidateMode::Distribution => TestMode::Distribution,
        ValidateMode::Individual => TestMode::Individual,
        ValidateMode::Expectation => TestMode::Expectation,
    };
    let r = test_intervention_invariance(&m, &pred, &proxy, values, mode, n, seed).map_err(input)?;
    Ok(Outcome::new(to_json(&r)?, r.to_text(), r.pass))
}

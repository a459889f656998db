//! Two structural equation models that entail the same joint distribution
//! while only one of them exhibits unresolved discrimination.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{dsl, models};
use crate::expr::sigmoid;
use crate::graph::AuditVerdict;
use crate::sem::rng::derive_seed;
use crate::sem::{sample, SEModel, SampleMatrix};
use crate::stats::{self, KsResult};

use super::{ValidatorError, ALPHA, MIN_BIN_ROWS};

const PREDICTOR: &str = "Rstar";
const CALIBRATION_BINS: usize = 10;
const CALIBRATION_SIGMAS: f64 = 3.0;

/// `A = ±1` fair coin, `X1` a two-component mixture whose weight depends on
/// `A`, `Y = ±1` with `P(Y = 1 | X1) = σ(2 X1)`, `X2 = X1 - A`, `R* = X1`.
pub fn thm1_left_model() -> SEModel {
    dsl::load_model(models::THM1_LEFT, "thm1_left").expect("bundled model is valid")
}

/// `A = ±1` fair coin, `Y = ±1` with `P(Y = 1 | A) = σ(2 A)`,
/// `X2 ~ N(Y, 1)`, `X1 = A + X2`, `R* = A + X2`.
pub fn thm1_right_model() -> SEModel {
    dsl::load_model(models::THM1_RIGHT, "thm1_right").expect("bundled model is valid")
}

/// One cross-graph (or cross-group) KS comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsComparison {
    pub variable: String,
    pub condition: Option<String>,
    pub ks: KsResult,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditPair {
    pub left: AuditVerdict,
    pub right: AuditVerdict,
    /// Left free of unresolved discrimination, right not.
    pub pass: bool,
}

/// Observed frequency of `Y = 1` in one `X1` bin against the closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub graph: String,
    #[serde(with = "super::lower_bound")]
    pub lo: f64,
    #[serde(with = "super::upper_bound")]
    pub hi: f64,
    pub count: usize,
    pub observed: f64,
    /// Average of `σ(2 x1)` over the bin.
    pub expected: f64,
    /// Three binomial standard deviations of the bin average.
    pub tolerance: f64,
    /// `None` when the bin has fewer than the minimum number of rows.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub n: usize,
    pub seed: u64,
    pub alpha: f64,
    pub joint: Vec<KsComparison>,
    pub joint_pass: bool,
    pub audits: AuditPair,
    pub calibration: Vec<CalibrationBin>,
    pub calibration_pass: bool,
    pub equal_odds: Vec<KsComparison>,
    pub equal_odds_pass: bool,
    pub pass: bool,
}

impl Theorem1Report {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n: {}  seed: {}  alpha: {}", self.n, self.seed, self.alpha);
        let _ = writeln!(s, "joint distribution, left vs right:");
        for c in &self.joint {
            let _ = writeln!(s, "  {}", describe(c));
        }
        let _ = writeln!(
            s,
            "audits with X1 resolving: left={} right={} -> {}",
            self.audits.left.verdict,
            self.audits.right.verdict,
            verdict(self.audits.pass)
        );
        for w in &self.audits.right.witnesses {
            let _ = writeln!(s, "  right witness: {w}");
        }
        let _ = writeln!(s, "P(Y=1 | X1) calibration:");
        for b in &self.calibration {
            let _ = writeln!(
                s,
                "  {:<6} ({:>7.3}, {:>7.3}] n={:<6} obs={:.4} exp={:.4} tol={:.4} {}",
                b.graph,
                b.lo,
                b.hi,
                b.count,
                b.observed,
                b.expected,
                b.tolerance,
                b.pass.map_or("skipped", verdict)
            );
        }
        let _ = writeln!(s, "equal odds for X2:");
        for c in &self.equal_odds {
            let _ = writeln!(s, "  {}", describe(c));
        }
        let _ = writeln!(s, "verdict: {}", if self.pass { "PASS" } else { "FAIL" });
        s
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

fn describe(c: &KsComparison) -> String {
    let cond = c.condition.as_deref().map_or(String::new(), |x| format!(" | {x}"));
    format!(
        "{:<14} D={:.5} crit={:.5} {}",
        format!("{}{cond}", c.variable),
        c.ks.statistic,
        c.ks.critical_value,
        verdict(c.pass)
    )
}

fn rows_where(data: &SampleMatrix, var: &str, cond: Option<(&str, f64)>) -> Vec<f64> {
    let xs = data.column(var).expect("sampled column");
    match cond {
        None => xs.to_vec(),
        Some((c, v)) => {
            let cs = data.column(c).expect("sampled column");
            xs.iter().zip(cs).filter(|(_, &cv)| cv == v).map(|(x, _)| *x).collect()
        }
    }
}

fn compare(variable: &str, condition: Option<String>, a: &[f64], b: &[f64]) -> KsComparison {
    let ks = stats::ks_two_sample(a, b, ALPHA);
    KsComparison { variable: variable.into(), condition, pass: ks.passes(), ks }
}

/// Samples both models and checks (i) equality of marginals and conditionals
/// across the graphs, (ii) the opposite audit verdicts with `X1` resolving,
/// (iii) `P(Y = 1 | X1) = σ(2 X1)` in bins, and (iv) `A ⊥ X2 | Y`.
pub fn reproduce_theorem1(n: usize, seed: u64) -> Result<Theorem1Report, ValidatorError> {
    if n < 2 {
        return Err(ValidatorError::Invalid("need at least two rows per graph".into()));
    }
    let left = thm1_left_model();
    let right = thm1_right_model();
    let (dl, dr) = rayon::join(
        || sample(&left, n, derive_seed(seed, 1)),
        || sample(&right, n, derive_seed(seed, 2)),
    );
    let (dl, dr) = (dl?, dr?);

    let mut joint = Vec::new();
    for var in ["A", "Y", "X1", "X2", PREDICTOR] {
        joint.push(compare(var, None, &rows_where(&dl, var, None), &rows_where(&dr, var, None)));
    }
    let conditions = [("A", 1.0), ("A", -1.0), ("Y", 1.0), ("Y", -1.0)];
    for var in ["Y", "X1", "X2", PREDICTOR] {
        for (c, v) in conditions {
            if c == var {
                continue;
            }
            let a = rows_where(&dl, var, Some((c, v)));
            let b = rows_where(&dr, var, Some((c, v)));
            if a.is_empty() || b.is_empty() {
                continue;
            }
            joint.push(compare(var, Some(format!("{c}={v}")), &a, &b));
        }
    }
    let joint_pass = joint.iter().all(|c| c.pass);

    let la = left.graph().unresolved_discrimination(PREDICTOR)?;
    let ra = right.graph().unresolved_discrimination(PREDICTOR)?;
    let audits = AuditPair { pass: !la.verdict && ra.verdict, left: la, right: ra };

    let mut calibration = calibration_bins("left", &dl);
    calibration.extend(calibration_bins("right", &dr));
    let calibration_pass = calibration.iter().all(|b| b.pass != Some(false));

    let mut equal_odds = Vec::new();
    for (graph, data) in [("left", &dl), ("right", &dr)] {
        for y in [1.0, -1.0] {
            let x2 = data.column("X2").expect("sampled column");
            let a = data.column("A").expect("sampled column");
            let ys = data.column("Y").expect("sampled column");
            let pick = |av: f64| -> Vec<f64> {
                (0..data.nrows()).filter(|&i| ys[i] == y && a[i] == av).map(|i| x2[i]).collect()
            };
            let (plus, minus) = (pick(1.0), pick(-1.0));
            if plus.is_empty() || minus.is_empty() {
                continue;
            }
            equal_odds.push(compare("X2", Some(format!("{graph}, Y={y}, A=1 vs A=-1")), &plus, &minus));
        }
    }
    let equal_odds_pass = !equal_odds.is_empty() && equal_odds.iter().all(|c| c.pass);

    Ok(Theorem1Report {
        n,
        seed,
        alpha: ALPHA,
        pass: joint_pass && audits.pass && calibration_pass && equal_odds_pass,
        joint,
        joint_pass,
        audits,
        calibration,
        calibration_pass,
        equal_odds,
        equal_odds_pass,
    })
}

fn calibration_bins(graph: &str, data: &SampleMatrix) -> Vec<CalibrationBin> {
    let x1 = data.column("X1").expect("sampled column");
    let y = data.column("Y").expect("sampled column");
    let mut sorted = x1.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut edges = vec![f64::NEG_INFINITY];
    for k in 1..CALIBRATION_BINS {
        edges.push(stats::quantile_sorted(&sorted, k as f64 / CALIBRATION_BINS as f64));
    }
    edges.push(f64::INFINITY);
    edges.dedup();
    edges
        .windows(2)
        .map(|w| {
            let (lo, hi) = (w[0], w[1]);
            let (mut count, mut ones, mut expected, mut var) = (0usize, 0usize, 0.0, 0.0);
            for (x, yv) in x1.iter().zip(y) {
                if *x > lo && *x <= hi {
                    let q = sigmoid(2.0 * x);
                    count += 1;
                    ones += usize::from(*yv == 1.0);
                    expected += q;
                    var += q * (1.0 - q);
                }
            }
            let c = count.max(1) as f64;
            let observed = ones as f64 / c;
            let expected = expected / c;
            let tolerance = CALIBRATION_SIGMAS * var.sqrt() / c;
            let pass = (count >= MIN_BIN_ROWS).then(|| (observed - expected).abs() <= tolerance);
            CalibrationBin { graph: graph.into(), lo, hi, count, observed, expected, tolerance, pass }
        })
        .collect()
}

//! Monte Carlo checks of interventional invariance.
//!
//! A predictor is free of proxy discrimination when its distribution under
//! `do(P = p)` does not depend on `p`. Each value of `p` gets its own
//! do-sample with a seed derived from the master seed, so the arms are
//! independent draws rather than coupled counterfactuals.

mod sweep;
mod theorem1;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{EstimatorError, FittedPredictor};
use crate::graph::GraphError;
use crate::sem::rng::derive_seed;
use crate::sem::{do_sample, Intervention, SEModel, SemError};
use crate::stats::{self, KsResult};

pub use sweep::{necessity_sweep, SweepPoint, SweepReport, SWEEP_VALUES};
pub use theorem1::{
    reproduce_theorem1, thm1_left_model, thm1_right_model, AuditPair, CalibrationBin, KsComparison,
    Theorem1Report,
};

/// Significance level of every distribution test.
pub const ALPHA: f64 = 0.01;
/// Half-width of the mean test in pooled standard deviations per `√n`.
pub const MEAN_RULE_SIGMAS: f64 = 4.0;
/// Smallest bin, per arm, that individual mode will test.
pub const MIN_BIN_ROWS: usize = 100;

const ARM_TAG: u64 = 0x6172_6d00_0000_0000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidatorError {
    #[error(transparent)]
    Sem(#[from] SemError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("need at least two distinct intervention values")]
    TooFewValues,
    #[error("individual mode found no testable bins: {0}")]
    TooFewBins(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMode {
    Distribution,
    Individual,
    Expectation,
}

impl std::str::FromStr for TestMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "distribution" => Ok(TestMode::Distribution),
            "individual" => Ok(TestMode::Individual),
            "expectation" => Ok(TestMode::Expectation),
            _ => Err(format!("unknown mode `{s}` (expected distribution, individual or expectation)")),
        }
    }
}

/// Difference of arm means and the fixed mean rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanComparison {
    pub mean_a: f64,
    pub mean_b: f64,
    /// `mean_b - mean_a`.
    pub difference: f64,
    pub pooled_sd: f64,
    /// Standard error of the difference.
    pub standard_error: f64,
    /// `4 · pooled_sd / √n`.
    pub threshold: f64,
    pub pass: bool,
}

impl MeanComparison {
    pub fn new(a: &[f64], b: &[f64]) -> Self {
        let (va, vb) = (stats::variance(a), stats::variance(b));
        let mean_a = stats::mean(a);
        let mean_b = stats::mean(b);
        let difference = mean_b - mean_a;
        let pooled_sd = ((va + vb) / 2.0).sqrt();
        let n = a.len().min(b.len()) as f64;
        let threshold = MEAN_RULE_SIGMAS * pooled_sd / n.sqrt();
        MeanComparison {
            mean_a,
            mean_b,
            difference,
            pooled_sd,
            standard_error: (va / a.len() as f64 + vb / b.len() as f64).sqrt(),
            threshold,
            // Two constant, equal arms have zero threshold and zero difference.
            pass: difference.abs() < threshold || difference == 0.0,
        }
    }
}

/// Bin edges. An open end is written as `null` and read back as the
/// matching infinity.
macro_rules! bound_serde {
    ($name:ident, $open:expr) => {
        pub(crate) mod $name {
            use serde::{Deserialize, Deserializer, Serializer};

            pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
                if v.is_finite() {
                    s.serialize_f64(*v)
                } else {
                    s.serialize_none()
                }
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
                Ok(Option::<f64>::deserialize(d)?.unwrap_or($open))
            }
        }
    };
}

bound_serde!(lower_bound, f64::NEG_INFINITY);
bound_serde!(upper_bound, f64::INFINITY);

/// One decile bin of one feature in individual mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinResult {
    pub feature: String,
    #[serde(with = "lower_bound")]
    pub lo: f64,
    #[serde(with = "upper_bound")]
    pub hi: f64,
    pub n_a: usize,
    pub n_b: usize,
    /// Absent when either arm has fewer than [`MIN_BIN_ROWS`] rows.
    pub ks: Option<KsResult>,
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub p: f64,
    pub p_prime: f64,
    pub ks: KsResult,
    pub mean: MeanComparison,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub bins: Vec<BinResult>,
    pub pass: bool,
}

/// Everything needed to re-derive the verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionTestReport {
    pub mode: TestMode,
    pub proxy: String,
    pub values: Vec<f64>,
    pub n: usize,
    pub seed: u64,
    pub arm_seeds: Vec<u64>,
    pub alpha: f64,
    pub decision_rule: String,
    pub pairs: Vec<PairResult>,
    pub pass: bool,
    pub notes: Vec<String>,
}

impl InterventionTestReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode: {:?}  proxy: {}  n: {}  seed: {}", self.mode, self.proxy, self.n, self.seed);
        let _ = writeln!(s, "rule: {}", self.decision_rule);
        let _ = writeln!(s, "{:>8} {:>8} {:>10} {:>10} {:>12} {:>12}  verdict", "p", "p'", "KS D", "crit", "mean diff", "mean thr");
        for pr in &self.pairs {
            let _ = writeln!(
                s,
                "{:>8} {:>8} {:>10.5} {:>10.5} {:>12.5} {:>12.5}  {}",
                pr.p,
                pr.p_prime,
                pr.ks.statistic,
                pr.ks.critical_value,
                pr.mean.difference,
                pr.mean.threshold,
                if pr.pass { "pass" } else { "FAIL" }
            );
            for b in pr.bins.iter().filter(|b| b.pass == Some(false)) {
                let _ = writeln!(s, "    failing bin {} in ({:.4}, {:.4}]", b.feature, b.lo, b.hi);
            }
        }
        for note in &self.notes {
            let _ = writeln!(s, "note: {note}");
        }
        let _ = writeln!(s, "verdict: {}", if self.pass { "PASS" } else { "FAIL" });
        s
    }
}

/// Seed of the do-arm for the `k`-th intervention value.
pub fn arm_seed(seed: u64, k: usize) -> u64 {
    derive_seed(seed, ARM_TAG | k as u64)
}

struct Arm {
    r: Vec<f64>,
    features: Vec<Vec<f64>>,
}

/// Samples `n` rows under `do(p = v)` for every value and compares the
/// predictor's output across every pair of values.
///
/// * `Distribution`: two-sample KS at level [`ALPHA`].
/// * `Expectation`: `|Δmean| < 4 · pooled_sd / √n`.
/// * `Individual`: KS within decile bins of each non-proxy input; all tested
///   bins must pass.
///
/// Both statistics are always recorded.
pub fn test_intervention_invariance(
    m: &SEModel,
    pred: &FittedPredictor,
    p: &str,
    values: &[f64],
    mode: TestMode,
    n: usize,
    seed: u64,
) -> Result<InterventionTestReport, ValidatorError> {
    m.graph().index_of(p)?;
    if values.len() < 2 || values.iter().enumerate().any(|(i, v)| values[..i].contains(v)) {
        return Err(ValidatorError::TooFewValues);
    }
    if n == 0 {
        return Err(ValidatorError::Invalid("sample size must be positive".into()));
    }
    let features: Vec<String> = pred.inputs().into_iter().filter(|f| f != p).collect();
    if mode == TestMode::Individual && features.is_empty() {
        return Err(ValidatorError::TooFewBins("the predictor reads no feature besides the proxy".into()));
    }

    let arm_seeds: Vec<u64> = (0..values.len()).map(|k| arm_seed(seed, k)).collect();
    let arms: Vec<Arm> = values
        .par_iter()
        .zip(&arm_seeds)
        .map(|(&v, &s)| -> Result<Arm, ValidatorError> {
            let data = do_sample(m, &[(p, Intervention::Point(v))], n, s)?;
            let r = pred.eval_matrix(&data)?;
            let features = if mode == TestMode::Individual {
                features.iter().map(|f| data.require(f).map(<[f64]>::to_vec)).collect::<Result<_, _>>()?
            } else {
                Vec::new()
            };
            Ok(Arm { r, features })
        })
        .collect::<Result<_, _>>()?;

    let mut pairs = Vec::new();
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            let (a, b) = (&arms[i], &arms[j]);
            let ks = stats::ks_two_sample(&a.r, &b.r, ALPHA);
            let mean = MeanComparison::new(&a.r, &b.r);
            let bins = if mode == TestMode::Individual {
                individual_bins(&features, a, b)?
            } else {
                Vec::new()
            };
            let pass = match mode {
                TestMode::Distribution => ks.passes(),
                TestMode::Expectation => mean.pass,
                TestMode::Individual => bins.iter().all(|b| b.pass != Some(false)),
            };
            pairs.push(PairResult { p: values[i], p_prime: values[j], ks, mean, bins, pass });
        }
    }

    let decision_rule = match mode {
        TestMode::Distribution => format!("pass iff KS D < c({ALPHA})·sqrt((n+m)/(nm)) for every pair"),
        TestMode::Expectation => "pass iff |mean difference| < 4·pooled sd/sqrt(n) for every pair".into(),
        TestMode::Individual => format!(
            "pass iff KS D < c({ALPHA})·sqrt((n+m)/(nm)) in every decile bin with at least {MIN_BIN_ROWS} rows per arm, for every pair"
        ),
    };
    let mut notes = Vec::new();
    if mode == TestMode::Individual {
        notes.push(
            "conditioning on X = x is approximated by decile bins of each feature over both arms pooled".to_string(),
        );
    }
    Ok(InterventionTestReport {
        mode,
        proxy: p.to_string(),
        values: values.to_vec(),
        n,
        seed,
        arm_seeds,
        alpha: ALPHA,
        decision_rule,
        pass: pairs.iter().all(|pr| pr.pass),
        pairs,
        notes,
    })
}

/// Interior decile edges of `xs`, deduplicated.
fn decile_edges(xs: &[f64]) -> Vec<f64> {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (1..10).map(|k| stats::quantile_sorted(&sorted, k as f64 / 10.0)).collect();
    edges.dedup();
    edges
}

fn individual_bins(features: &[String], a: &Arm, b: &Arm) -> Result<Vec<BinResult>, ValidatorError> {
    let mut out = Vec::new();
    for (f, name) in features.iter().enumerate() {
        let (fa, fb) = (&a.features[f], &b.features[f]);
        let pooled: Vec<f64> = fa.iter().chain(fb).copied().collect();
        let edges = decile_edges(&pooled);
        if pooled.iter().all(|&v| v == pooled[0]) {
            return Err(ValidatorError::TooFewBins(format!("feature `{name}` is constant")));
        }
        let bounds: Vec<f64> = std::iter::once(f64::NEG_INFINITY)
            .chain(edges.iter().copied())
            .chain(std::iter::once(f64::INFINITY))
            .collect();
        for w in bounds.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let pick = |xs: &[f64], r: &[f64]| -> Vec<f64> {
                xs.iter().zip(r).filter(|(x, _)| **x > lo && **x <= hi).map(|(_, v)| *v).collect()
            };
            let (ra, rb) = (pick(fa, &a.r), pick(fb, &b.r));
            let (ks, pass) = if ra.len() >= MIN_BIN_ROWS && rb.len() >= MIN_BIN_ROWS {
                let ks = stats::ks_two_sample(&ra, &rb, ALPHA);
                (Some(ks), Some(ks.passes()))
            } else {
                (None, None)
            };
            out.push(BinResult { feature: name.clone(), lo, hi, n_a: ra.len(), n_b: rb.len(), ks, pass });
        }
    }
    if out.iter().all(|b| b.pass.is_none()) {
        return Err(ValidatorError::TooFewBins(format!(
            "no bin holds {MIN_BIN_ROWS} rows from both arms"
        )));
    }
    Ok(out)
}

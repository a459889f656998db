//! Necessity of cancelling the proxy's influence: `h(g(X̃) + μ P)` is
//! invariant under `do(P)` only at `μ = 0`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimator::{adjusted_predictor, AdjustmentSource, Link, PredictorForm};
use crate::graph::NodeRole;
use crate::sem::SEModel;

use super::{test_intervention_invariance, InterventionTestReport, TestMode, ValidatorError};

/// Intervention values compared at every grid point.
pub const SWEEP_VALUES: [f64; 2] = [-1.0, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub mu: f64,
    pub pass: bool,
    pub report: InterventionTestReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub proxy: String,
    pub features: Vec<String>,
    pub link: Link,
    pub n: usize,
    pub seed: u64,
    pub points: Vec<SweepPoint>,
    pub pass_set: Vec<f64>,
    /// Grid points within half the grid spacing of zero.
    pub expected_pass_set: Vec<f64>,
    pub matches_expected: bool,
}

impl SweepReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "proxy: {}  features: {}  link: {}  n: {}  seed: {}",
            self.proxy,
            self.features.join(", "),
            self.link,
            self.n,
            self.seed
        );
        let _ = writeln!(s, "{:>8} {:>10} {:>10}  verdict", "mu", "KS D", "crit");
        for pt in &self.points {
            let worst = pt.report.pairs.iter().map(|p| p.ks.statistic).fold(0.0, f64::max);
            let crit = pt.report.pairs.first().map_or(f64::NAN, |p| p.ks.critical_value);
            let _ = writeln!(s, "{:>8} {:>10.5} {:>10.5}  {}", pt.mu, worst, crit, if pt.pass { "pass" } else { "FAIL" });
        }
        let _ = writeln!(s, "pass set: {:?}  expected: {:?}", self.pass_set, self.expected_pass_set);
        let _ = writeln!(s, "verdict: {}", if self.matches_expected { "PASS" } else { "FAIL" });
        s
    }
}

/// Runs the distribution test on `link(Σ (X_i - E[X_i | do(P)]) + μ P)` for
/// every `μ` in the grid.
///
/// The proxy and features come from the model's hypothesis class: its single
/// proxy input and every other input. All grid points share one seed, so the
/// comparison across `μ` uses common random numbers.
pub fn necessity_sweep(
    m: &SEModel,
    link: Link,
    grid: &[f64],
    n: usize,
    seed: u64,
) -> Result<SweepReport, ValidatorError> {
    if grid.is_empty() {
        return Err(ValidatorError::Invalid("empty grid".into()));
    }
    let h = m.sole_hypothesis()?;
    let g = m.graph();
    let mut proxies = Vec::new();
    let mut features = Vec::new();
    for input in &h.inputs {
        if g.role(input)? == NodeRole::Proxy {
            proxies.push(input.clone());
        } else {
            features.push(input.clone());
        }
    }
    let [proxy] = proxies.as_slice() else {
        return Err(ValidatorError::Invalid(format!(
            "the sweep needs exactly one proxy input, found {}",
            proxies.len()
        )));
    };
    let base = adjusted_predictor(AdjustmentSource::Model(m), proxy, &features, link, None)?;

    let points: Vec<SweepPoint> = grid
        .par_iter()
        .map(|&mu| -> Result<SweepPoint, ValidatorError> {
            let mut pred = base.clone();
            if let PredictorForm::Adjusted { proxy_coefficient, .. } = &mut pred.form {
                *proxy_coefficient = mu;
            }
            pred.coefficients.insert("proxy_coefficient".into(), mu);
            let report =
                test_intervention_invariance(m, &pred, proxy, &SWEEP_VALUES, TestMode::Distribution, n, seed)?;
            Ok(SweepPoint { mu, pass: report.pass, report })
        })
        .collect::<Result<_, _>>()?;

    let pass_set: Vec<f64> = points.iter().filter(|p| p.pass).map(|p| p.mu).collect();
    let expected_pass_set = expected_set(grid);
    Ok(SweepReport {
        proxy: proxy.clone(),
        features,
        link,
        n,
        seed,
        matches_expected: pass_set == expected_pass_set,
        points,
        pass_set,
        expected_pass_set,
    })
}

fn expected_set(grid: &[f64]) -> Vec<f64> {
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let spacing = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let tol = if spacing.is_finite() { spacing / 2.0 } else { 0.0 };
    grid.iter().copied().filter(|mu| mu.abs() <= tol && (tol > 0.0 || *mu == 0.0)).collect()
}

//! Fitting predictors: equality-constrained least squares and adjusted
//! features.

use std::fmt;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{HypothesisClass, LinearConstraint, INTERCEPT_PARAM};
use crate::graph::{CausalGraph, GraphError};
use crate::sem::{conditional_expectation_fit, interventional_expectation, SEModel, SampleMatrix, SemError};

/// Relative singular-value cutoff for rank decisions.
const RANK_TOL: f64 = 1e-10;
/// Largest tolerated constraint residual after solving.
pub const CONSTRAINT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Sem(#[from] SemError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("constraint has no solution (residual {residual:.3e})")]
    InfeasibleConstraint { residual: f64 },
    #[error("constraint mentions parameters outside the hypothesis class")]
    ConstraintMismatch,
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("E[{feature} | do({proxy})] is not identifiable by conditioning: an ancestor of `{proxy}` reaches `{feature}` around it")]
    AdjustmentNotIdentifiable { proxy: String, feature: String },
    #[error("missing value for `{0}`")]
    MissingValue(String),
    #[error("{0}")]
    Invalid(String),
}

/// The outer function `r` applied to adjusted features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Sigmoid,
    Tanh,
    Cubic,
}

impl Link {
    pub const ALL: [Link; 4] = [Link::Identity, Link::Sigmoid, Link::Tanh, Link::Cubic];

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Link::Identity => x,
            Link::Sigmoid => crate::expr::sigmoid(x),
            Link::Tanh => x.tanh(),
            Link::Cubic => x * x * x + x,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Link::Identity => "identity",
            Link::Sigmoid => "sigmoid",
            Link::Tanh => "tanh",
            Link::Cubic => "cubic",
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Link {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Link::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown link `{s}` (expected identity, sigmoid, tanh or cubic)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjustmentMode {
    /// `E[X | do(P)]` from the structural equations.
    Do,
    /// `E[X | P]` regressed from data.
    Observational,
}

/// `feature - (intercept + slope * proxy)`, scaled by `weight`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adjustment {
    pub feature: String,
    pub intercept: f64,
    pub slope: f64,
    /// Standard error of the slope when it was estimated from data.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub slope_se: Option<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorForm {
    /// `Σ θ_i · input_i (+ c)`.
    ConstrainedLinear { predictor: String },
    /// `r(Σ w_i (X_i - E[X_i | P]) + proxy_coefficient · P)`.
    Adjusted {
        proxy: String,
        mode: AdjustmentMode,
        link: Link,
        adjustments: Vec<Adjustment>,
        #[serde(default)]
        proxy_coefficient: f64,
    },
    /// `λ (X - E[X | do(P)]) + c`.
    Expectation {
        proxy: String,
        adjustment: Adjustment,
        lambda: f64,
        c: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub residuals: Vec<f64>,
    pub max_violation: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub n: usize,
    pub seed: Option<u64>,
    /// Mean squared training error.
    pub loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tie_break: Option<String>,
}

/// A predictor ready for evaluation, with enough metadata to audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPredictor {
    pub form: PredictorForm,
    /// Named coefficients; for linear forms these are the parameters.
    pub coefficients: IndexMap<String, f64>,
    #[serde(default)]
    pub constraint_check: Option<ConstraintCheck>,
    #[serde(default)]
    pub training: TrainingInfo,
}

impl FittedPredictor {
    /// A linear predictor with fixed parameters, ordered as
    /// [`HypothesisClass::all_params`].
    pub fn linear(h: &HypothesisClass, theta: &[f64]) -> Result<Self, EstimatorError> {
        let params = h.all_params();
        if params.len() != theta.len() {
            return Err(EstimatorError::Invalid(format!(
                "{} parameters for {} values",
                params.len(),
                theta.len()
            )));
        }
        Ok(FittedPredictor {
            form: PredictorForm::ConstrainedLinear { predictor: h.predictor.clone() },
            coefficients: params.into_iter().zip(theta.iter().copied()).collect(),
            constraint_check: None,
            training: TrainingInfo::default(),
        })
    }

    /// Columns the predictor reads.
    pub fn inputs(&self) -> Vec<String> {
        match &self.form {
            PredictorForm::ConstrainedLinear { .. } => self
                .coefficients
                .keys()
                .filter(|k| *k != INTERCEPT_PARAM)
                .map(|k| k.strip_prefix("lambda_").unwrap_or(k).to_string())
                .collect(),
            PredictorForm::Adjusted { proxy, adjustments, .. } => {
                let mut v: Vec<String> = adjustments.iter().map(|a| a.feature.clone()).collect();
                v.push(proxy.clone());
                v
            }
            PredictorForm::Expectation { proxy, adjustment, .. } => {
                vec![adjustment.feature.clone(), proxy.clone()]
            }
        }
    }

    /// Evaluates on one row given by a lookup function.
    pub fn eval(&self, value: impl Fn(&str) -> Option<f64>) -> Result<f64, EstimatorError> {
        let get = |name: &str| value(name).ok_or_else(|| EstimatorError::MissingValue(name.to_string()));
        match &self.form {
            PredictorForm::ConstrainedLinear { .. } => {
                let mut acc = 0.0;
                for (k, &c) in &self.coefficients {
                    acc += if k == INTERCEPT_PARAM {
                        c
                    } else {
                        c * get(k.strip_prefix("lambda_").unwrap_or(k))?
                    };
                }
                Ok(acc)
            }
            PredictorForm::Adjusted { proxy, link, adjustments, proxy_coefficient, .. } => {
                let p = get(proxy)?;
                let mut arg = proxy_coefficient * p;
                for a in adjustments {
                    arg += a.weight * (get(&a.feature)? - a.intercept - a.slope * p);
                }
                Ok(link.apply(arg))
            }
            PredictorForm::Expectation { proxy, adjustment: a, lambda, c } => {
                let p = get(proxy)?;
                Ok(lambda * (get(&a.feature)? - a.intercept - a.slope * p) + c)
            }
        }
    }

    /// Evaluates every row of a sample.
    pub fn eval_matrix(&self, data: &SampleMatrix) -> Result<Vec<f64>, EstimatorError> {
        let names = self.inputs();
        let cols: Vec<&[f64]> = names
            .iter()
            .map(|n| data.require(n))
            .collect::<Result<_, _>>()?;
        (0..data.nrows())
            .map(|i| {
                self.eval(|name| names.iter().position(|n| n == name).map(|j| cols[j][i]))
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("predictor serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, EstimatorError> {
        serde_json::from_str(text).map_err(|e| EstimatorError::Invalid(format!("predictor JSON: {e}")))
    }
}

/// Least squares over `{θ : con holds}` by null-space elimination.
///
/// The constraint's minimum-norm particular solution `θ_p` and an orthonormal
/// basis `N` of its null space come from one SVD; the remaining free
/// coordinates solve an ordinary least-squares problem in `X N`, again with
/// minimum-norm tie-breaking, so the returned `θ` is the minimum-norm
/// minimiser.
pub fn fit_constrained(
    data: &SampleMatrix,
    h: &HypothesisClass,
    y: &str,
    con: &LinearConstraint,
) -> Result<FittedPredictor, EstimatorError> {
    let params = h.all_params();
    let con = con.reorder(&params).ok_or(EstimatorError::ConstraintMismatch)?;
    let n = data.nrows();
    if n == 0 {
        return Err(EstimatorError::DegenerateDesign("no rows".into()));
    }
    let k = params.len();
    let mut x = DMatrix::<f64>::zeros(n, k);
    for (j, input) in h.inputs.iter().enumerate() {
        for (i, v) in data.require(input)?.iter().enumerate() {
            x[(i, j)] = *v;
        }
    }
    if h.intercept {
        x.column_mut(k - 1).fill(1.0);
    }
    let yv = DVector::from_column_slice(data.require(y)?);
    if x.iter().chain(yv.iter()).any(|v| !v.is_finite()) {
        return Err(EstimatorError::DegenerateDesign("non-finite values in data".into()));
    }

    let (theta_p, null) = constraint_space(&con, k)?;
    let xn = &x * &null;
    let resid = &yv - &x * &theta_p;
    let (z, rank) = if null.ncols() == 0 {
        (DVector::zeros(0), 0)
    } else {
        min_norm_lstsq(&xn, &resid)
    };
    let theta = &theta_p + &null * z;

    let fitted = &x * &theta;
    let loss = (&yv - fitted).norm_squared() / n as f64;
    let residuals = con.residuals(theta.as_slice());
    let max_violation = residuals.iter().map(|r| r.abs()).fold(0.0, f64::max);
    let mut coefficients = IndexMap::new();
    for (name, v) in params.iter().zip(theta.iter()) {
        coefficients.insert(name.clone(), *v);
    }
    Ok(FittedPredictor {
        form: PredictorForm::ConstrainedLinear { predictor: h.predictor.clone() },
        coefficients,
        constraint_check: Some(ConstraintCheck {
            residuals,
            max_violation,
            satisfied: max_violation <= CONSTRAINT_TOL,
        }),
        training: TrainingInfo {
            n,
            seed: Some(data.seed),
            loss: Some(loss),
            rank: Some(rank),
            tie_break: Some("minimum-norm".into()),
        },
    })
}

/// Particular solution and orthonormal null-space basis of `C θ = d`.
fn constraint_space(con: &LinearConstraint, k: usize) -> Result<(DVector<f64>, DMatrix<f64>), EstimatorError> {
    let rows = con.rows.len();
    if rows == 0 {
        return Ok((DVector::zeros(k), DMatrix::identity(k, k)));
    }
    // Pad to at least k rows so the SVD yields a full right basis.
    let m = rows.max(k);
    let mut c = DMatrix::<f64>::zeros(m, k);
    let mut d = DVector::<f64>::zeros(m);
    for (i, r) in con.rows.iter().enumerate() {
        for (j, v) in r.coefficients.iter().enumerate() {
            c[(i, j)] = *v;
        }
        d[i] = r.rhs;
    }
    let svd = svd(c.clone());
    let v_t = svd.v_t.as_ref().expect("requested V");
    let u = svd.u.as_ref().expect("requested U");
    let smax = svd.singular_values.max();
    let cutoff = RANK_TOL * smax.max(1.0);
    let mut theta = DVector::<f64>::zeros(k);
    let mut null_cols = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let v = v_t.row(i).transpose();
        if s > cutoff {
            theta += v * (u.column(i).dot(&d) / s);
        } else {
            null_cols.push(v);
        }
    }
    let residual = (&c * &theta - &d).amax();
    if residual > CONSTRAINT_TOL * (1.0 + d.amax()) {
        return Err(EstimatorError::InfeasibleConstraint { residual });
    }
    let null = if null_cols.is_empty() {
        DMatrix::zeros(k, 0)
    } else {
        DMatrix::from_columns(&null_cols)
    };
    Ok((theta, null))
}

/// Full SVD with `U` and `V`. Tall matrices are first reduced by QR so the
/// iteration runs on the square factor `R`, which keeps rank-deficient
/// designs accurate.
fn svd(a: DMatrix<f64>) -> SVD<f64, nalgebra::Dyn, nalgebra::Dyn> {
    if a.nrows() <= a.ncols() {
        return a.svd(true, true);
    }
    let qr = a.qr();
    let q = qr.q();
    let mut inner = qr.r().svd(true, true);
    inner.u = inner.u.map(|u| q * u);
    inner
}

/// Minimum-norm least-squares solution and numerical rank.
fn min_norm_lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, usize) {
    let svd = svd(a.clone());
    let smax = svd.singular_values.max();
    let cutoff = RANK_TOL * smax * (a.nrows().max(a.ncols()) as f64);
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    if rank == 0 {
        return (DVector::zeros(a.ncols()), 0);
    }
    let z = svd.solve(b, cutoff).expect("U and V were requested");
    (z, rank)
}

/// Where adjusted features get `E[X | P]` from.
#[derive(Debug, Clone, Copy)]
pub enum AdjustmentSource<'a> {
    Model(&'a SEModel),
    Data { graph: &'a CausalGraph, data: &'a SampleMatrix },
}

/// Builds `r(Σ w_i (X_i - E[X_i | do(P)]))`.
///
/// With a model the expectation comes from the structural equations. With
/// data the conditional expectation `E[X_i | P]` is regressed instead, which
/// is only admissible when no ancestor of `P` reaches `X_i` around it;
/// otherwise the call is refused. `weights` default to one per feature.
pub fn adjusted_predictor<S: AsRef<str>>(
    source: AdjustmentSource<'_>,
    p: &str,
    features: &[S],
    link: Link,
    weights: Option<&[f64]>,
) -> Result<FittedPredictor, EstimatorError> {
    if features.is_empty() {
        return Err(EstimatorError::Invalid("at least one feature is required".into()));
    }
    if let Some(w) = weights {
        if w.len() != features.len() {
            return Err(EstimatorError::Invalid(format!(
                "{} weights for {} features",
                w.len(),
                features.len()
            )));
        }
    }
    let mut adjustments = Vec::new();
    let mut training = TrainingInfo::default();
    let mode = match source {
        AdjustmentSource::Model(_) => AdjustmentMode::Do,
        AdjustmentSource::Data { .. } => AdjustmentMode::Observational,
    };
    for (i, x) in features.iter().enumerate() {
        let x = x.as_ref();
        let weight = weights.map_or(1.0, |w| w[i]);
        let adj = match source {
            AdjustmentSource::Model(m) => {
                let ie = interventional_expectation(m, x, p)?;
                Adjustment { feature: x.into(), intercept: ie.intercept, slope: ie.slope, slope_se: None, weight }
            }
            AdjustmentSource::Data { graph, data } => {
                if !graph.adjustment_identifiable(p, x)? {
                    return Err(EstimatorError::AdjustmentNotIdentifiable {
                        proxy: p.to_string(),
                        feature: x.to_string(),
                    });
                }
                let fit = conditional_expectation_fit(data, x, p)?;
                training.n = data.nrows();
                training.seed = Some(data.seed);
                Adjustment {
                    feature: x.into(),
                    intercept: fit.intercept,
                    slope: fit.slope,
                    slope_se: Some(fit.slope_se),
                    weight,
                }
            }
        };
        adjustments.push(adj);
    }
    let mut coefficients = IndexMap::new();
    for a in &adjustments {
        coefficients.insert(format!("slope_{}", a.feature), a.slope);
        coefficients.insert(format!("weight_{}", a.feature), a.weight);
    }
    Ok(FittedPredictor {
        form: PredictorForm::Adjusted {
            proxy: p.to_string(),
            mode,
            link,
            adjustments,
            proxy_coefficient: 0.0,
        },
        coefficients,
        constraint_check: None,
        training,
    })
}

/// `R = λ (X - E[X | do(P)]) + c`, whose interventional mean is `c` for every
/// value of `P`.
pub fn expectation_predictor(
    m: &SEModel,
    p: &str,
    x: &str,
    lambda: f64,
    c: f64,
) -> Result<FittedPredictor, EstimatorError> {
    let ie = interventional_expectation(m, x, p)?;
    let adjustment = Adjustment { feature: x.into(), intercept: ie.intercept, slope: ie.slope, slope_se: None, weight: 1.0 };
    let coefficients = IndexMap::from([
        ("lambda".to_string(), lambda),
        ("c".to_string(), c),
        (format!("slope_{x}"), ie.slope),
    ]);
    Ok(FittedPredictor {
        form: PredictorForm::Expectation { proxy: p.into(), adjustment, lambda, c },
        coefficients,
        constraint_check: None,
        training: TrainingInfo::default(),
    })
}

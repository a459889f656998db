//! Non-discrimination constraints for linear hypothesis classes.
//!
//! Both procedures follow the same recipe: intervene on the mounting node(s),
//! expand the predictor over the roots of the intervened graph, and require
//! the coefficient of the node whose influence must vanish to equal a
//! reference value (zero by default). Because the predictor is linear in its
//! parameters that requirement is a linear equality system on `θ`.

use std::collections::HashMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{DirectedPath, GraphError, NodeRole};
use crate::sem::{root_form, RootForm, SEModel, SemError, SymCoef};

/// Name of the optional intercept parameter.
pub const INTERCEPT_PARAM: &str = "c";

const TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstraintError {
    #[error(transparent)]
    Sem(#[from] SemError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("proxy `{proxy}` is not an input of `{predictor}`; {hint}")]
    ProxyNotInput {
        proxy: String,
        predictor: String,
        hint: String,
    },
    #[error("protected node `{0}` has parents; intervening on it is not the same as conditioning")]
    ProtectedNotRoot(String),
    #[error("no parameter choice sets the coefficient of `{node}` to {target}")]
    Inexpressible { node: String, target: f64 },
}

/// `R_θ = Σ_i θ_i · input_i (+ c)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisClass {
    pub predictor: String,
    pub inputs: Vec<String>,
    #[serde(default)]
    pub intercept: bool,
}

impl HypothesisClass {
    pub fn new(predictor: impl Into<String>, inputs: &[&str], intercept: bool) -> Self {
        HypothesisClass {
            predictor: predictor.into(),
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            intercept,
        }
    }

    /// Parameter name for an input: `lambda_<input>`.
    pub fn param_for(input: &str) -> String {
        format!("lambda_{input}")
    }

    /// Slope parameters, one per input, in input order.
    pub fn theta_names(&self) -> Vec<String> {
        self.inputs.iter().map(|i| Self::param_for(i)).collect()
    }

    /// Slope parameters followed by the intercept, if any.
    pub fn all_params(&self) -> Vec<String> {
        let mut out = self.theta_names();
        if self.intercept {
            out.push(INTERCEPT_PARAM.to_string());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    /// One entry per name in the owning constraint's `theta_names`.
    pub coefficients: Vec<f64>,
    pub rhs: f64,
    pub description: String,
}

/// `rows · θ = rhs`, over named parameters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub theta_names: Vec<String>,
    pub rows: Vec<ConstraintRow>,
}

impl LinearConstraint {
    pub fn unconstrained(theta_names: Vec<String>) -> Self {
        LinearConstraint { theta_names, rows: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `row · θ - rhs` for each row.
    pub fn residuals(&self, theta: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.coefficients.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() - r.rhs)
            .collect()
    }

    pub fn max_violation(&self, theta: &[f64]) -> f64 {
        self.residuals(theta).into_iter().map(f64::abs).fold(0.0, f64::max)
    }

    /// Re-expresses the rows over `names`; parameters missing from `names`
    /// must have zero coefficients.
    pub fn reorder(&self, names: &[String]) -> Option<LinearConstraint> {
        let mut rows = Vec::new();
        for r in &self.rows {
            let mut coeffs = vec![0.0; names.len()];
            for (name, &c) in self.theta_names.iter().zip(&r.coefficients) {
                match names.iter().position(|n| n == name) {
                    Some(j) => coeffs[j] = c,
                    None if c == 0.0 => {}
                    None => return None,
                }
            }
            rows.push(ConstraintRow { coefficients: coeffs, rhs: r.rhs, description: r.description.clone() });
        }
        Some(LinearConstraint { theta_names: names.to_vec(), rows })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DerivationMode {
    Proxy,
    Unresolved,
}

/// Everything needed to audit a derived constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivationReport {
    pub mode: DerivationMode,
    pub predictor: String,
    pub constraint_rows: Vec<ConstraintRow>,
    pub theta_names: Vec<String>,
    /// Reference value for each reparameterised coefficient; `None` marks a
    /// free parameter.
    pub theta0: IndexMap<String, Option<f64>>,
    pub expressible: bool,
    /// The reparameterisation `θ̃` as linear forms in `θ`.
    pub reparameterization: IndexMap<String, SymCoef>,
    pub free_parameters: String,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
    pub intervened_edges: Vec<(String, String)>,
    pub rootform: RootForm,
}

impl DerivationReport {
    pub fn constraint(&self) -> LinearConstraint {
        LinearConstraint {
            theta_names: self.theta_names.clone(),
            rows: self.constraint_rows.clone(),
        }
    }
}

/// Result of the expressibility check for a single proxy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expressibility {
    pub expressible: bool,
    /// `θ̃`: the proxy entry is the total coefficient of the proxy, every
    /// other entry is the input's own parameter.
    pub reparameterization: IndexMap<String, SymCoef>,
}

/// Splits the predictor into its overall dependence on `p` and a function of
/// the remaining roots. For a linear class over linear equations this always
/// succeeds.
pub fn check_expressibility(
    m: &SEModel,
    h: &HypothesisClass,
    p: &str,
) -> Result<Expressibility, ConstraintError> {
    let rf = root_form(m, &h.predictor, &[p])?;
    Ok(Expressibility {
        expressible: true,
        reparameterization: reparameterize(h, &rf, &[p.to_string()]),
    })
}

fn reparameterize(h: &HypothesisClass, rf: &RootForm, mounted: &[String]) -> IndexMap<String, SymCoef> {
    let mut out = IndexMap::new();
    for input in &h.inputs {
        let key = HypothesisClass::param_for(input);
        let coeff = if mounted.contains(input) {
            rf.coefficient(input)
        } else {
            SymCoef::param(&key)
        };
        out.insert(key, coeff);
    }
    out
}

/// Proxy procedure: intervene on each proxy, expand the predictor, and zero
/// (or set to `theta0[p]`) the overall coefficient of every proxy.
///
/// Several proxies are intervened on simultaneously and yield one row each.
pub fn derive_proxy_constraint<S: AsRef<str>>(
    m: &SEModel,
    h: &HypothesisClass,
    proxies: &[S],
    theta0: &HashMap<String, f64>,
) -> Result<DerivationReport, ConstraintError> {
    let g = m.graph();
    let proxies: Vec<String> = proxies.iter().map(|s| s.as_ref().to_string()).collect();
    for p in &proxies {
        let role = g.role(p)?;
        if role != NodeRole::Proxy {
            return Err(GraphError::RoleMismatch { node: p.clone(), expected: NodeRole::Proxy, found: role }.into());
        }
        if !h.inputs.contains(p) {
            let rest: Vec<&String> = h.inputs.iter().filter(|i| !proxies.contains(i)).collect();
            let hint = match g.unawareness_safe(&rest) {
                Ok(true) => "no proxy reaches the inputs, so the unaware predictor is already safe".to_string(),
                Ok(false) => "a proxy reaches the inputs; add the proxy as an input to cancel its influence".to_string(),
                Err(e) => format!("unawareness check failed: {e}"),
            };
            return Err(ConstraintError::ProxyNotInput {
                proxy: p.clone(),
                predictor: h.predictor.clone(),
                hint,
            });
        }
    }

    let rf = root_form(m, &h.predictor, &proxies)?;
    let params = h.all_params();
    let mut rows = Vec::new();
    let mut theta0_out = IndexMap::new();
    for p in &proxies {
        let target = theta0.get(p).copied().unwrap_or(0.0);
        if let Some(row) = zero_row(&rf.coefficient(p), &params, &HypothesisClass::param_for(p), p, target)? {
            rows.push(row);
        }
    }
    for input in &h.inputs {
        let v = if proxies.contains(input) {
            Some(theta0.get(input).copied().unwrap_or(0.0))
        } else {
            None
        };
        theta0_out.insert(HypothesisClass::param_for(input), v);
    }

    let mut warnings = Vec::new();
    if proxies.len() > 1 {
        warnings.push(format!(
            "{} proxies intervened on simultaneously; one constraint row per proxy",
            proxies.len()
        ));
    }
    let intervened = g.intervene(&proxies)?;
    Ok(DerivationReport {
        mode: DerivationMode::Proxy,
        predictor: h.predictor.clone(),
        free_parameters: free_description(&params, &rows),
        constraint_rows: rows,
        theta_names: params,
        theta0: theta0_out,
        expressible: true,
        reparameterization: reparameterize(h, &rf, &proxies),
        warnings,
        notes: Vec::new(),
        intervened_edges: edge_list(&intervened),
        rootform: rf,
    })
}

/// Resolving-variable procedure: replace each resolving node by an
/// independent draw from its marginal, expand the predictor, and zero the
/// coefficient of the protected attribute.
pub fn derive_unresolved_constraint<S: AsRef<str>>(
    m: &SEModel,
    h: &HypothesisClass,
    resolving: &[S],
) -> Result<DerivationReport, ConstraintError> {
    let g = m.graph();
    let a = g.protected().ok_or(GraphError::NoProtected)?.to_string();
    if !g.is_root(&a)? {
        return Err(ConstraintError::ProtectedNotRoot(a));
    }
    let resolving: Vec<String> = resolving.iter().map(|s| s.as_ref().to_string()).collect();
    for e in &resolving {
        let role = g.role(e)?;
        if role != NodeRole::Resolving {
            return Err(GraphError::RoleMismatch { node: e.clone(), expected: NodeRole::Resolving, found: role }.into());
        }
    }

    let rf = root_form(m, &h.predictor, &resolving)?;
    let params = h.all_params();
    let own = HypothesisClass::param_for(&a);
    let row = zero_row(&rf.coefficient(&a), &params, &own, &a, 0.0)?;
    let rows: Vec<ConstraintRow> = row.into_iter().collect();

    let mut warnings = Vec::new();
    let aware = h.inputs.contains(&a);
    if !aware && !rows.is_empty() {
        let constrained: Vec<&String> = h
            .inputs
            .iter()
            .filter(|i| {
                let j = params.iter().position(|p| *p == HypothesisClass::param_for(i));
                j.is_some_and(|j| rows.iter().any(|r| r.coefficients[j].abs() > TOL))
            })
            .collect();
        let resolved: Vec<DirectedPath> = g
            .directed_paths(&a, &h.predictor)?
            .into_iter()
            .filter(|path| {
                let n = path.nodes();
                let via = &n[n.len() - 2];
                constrained.contains(&via) && n.iter().any(|v| resolving.contains(v))
            })
            .collect();
        for path in resolved {
            warnings.push(format!(
                "over-cancellation: the constraint also cancels the resolved path {path}"
            ));
        }
    }

    let mut theta0 = IndexMap::new();
    for input in &h.inputs {
        theta0.insert(HypothesisClass::param_for(input), None);
    }
    if aware {
        theta0.insert(own.clone(), Some(0.0));
    }
    let mut notes = vec![format!(
        "each resolving node is replaced by an independent per-individual draw from its marginal; coefficient of `{a}` set to 0"
    )];
    if resolving.is_empty() {
        notes.push("no resolving nodes: the constraint removes the total effect of the protected attribute".into());
    }
    let intervened = g.intervene(&resolving)?;
    Ok(DerivationReport {
        mode: DerivationMode::Unresolved,
        predictor: h.predictor.clone(),
        free_parameters: free_description(&params, &rows),
        constraint_rows: rows,
        theta_names: params,
        theta0,
        expressible: true,
        reparameterization: reparameterize(h, &rf, &resolving),
        warnings,
        notes,
        intervened_edges: edge_list(&intervened),
        rootform: rf,
    })
}

/// Row forcing `coeff(θ) = target`, normalised so that `own` (or the first
/// non-zero parameter) has coefficient one. `None` when the requirement
/// already holds for every `θ`.
fn zero_row(
    coeff: &SymCoef,
    params: &[String],
    own: &str,
    node: &str,
    target: f64,
) -> Result<Option<ConstraintRow>, ConstraintError> {
    let mut coefficients: Vec<f64> = params.iter().map(|p| coeff.param_coeff(p)).collect();
    let mut rhs = target - coeff.value;
    let scale = params
        .iter()
        .position(|p| p == own)
        .map(|j| coefficients[j])
        .filter(|c| c.abs() > TOL)
        .or_else(|| coefficients.iter().copied().find(|c| c.abs() > TOL));
    let Some(scale) = scale else {
        if rhs.abs() <= TOL {
            return Ok(None);
        }
        return Err(ConstraintError::Inexpressible { node: node.to_string(), target });
    };
    for c in &mut coefficients {
        *c /= scale;
        if c.abs() <= TOL {
            *c = 0.0;
        }
    }
    rhs /= scale;
    if rhs.abs() <= TOL {
        rhs = 0.0;
    }
    let description = describe(&coefficients, params, rhs);
    Ok(Some(ConstraintRow { coefficients, rhs, description }))
}

fn describe(coefficients: &[f64], params: &[String], rhs: f64) -> String {
    let mut lhs = String::new();
    for (c, p) in coefficients.iter().zip(params) {
        if *c == 0.0 {
            continue;
        }
        let mag = c.abs();
        let body = if mag == 1.0 { p.clone() } else { format!("{mag}*{p}") };
        if lhs.is_empty() {
            if *c < 0.0 {
                lhs.push('-');
            }
            lhs.push_str(&body);
        } else {
            lhs.push_str(if *c < 0.0 { " - " } else { " + " });
            lhs.push_str(&body);
        }
    }
    format!("{lhs} = {rhs}")
}

fn free_description(params: &[String], rows: &[ConstraintRow]) -> String {
    let free = params.len().saturating_sub(rows.len());
    if rows.is_empty() {
        format!("unconstrained: all {} parameters free", params.len())
    } else {
        format!(
            "{free} free parameter(s) after {} constraint row(s) on ({})",
            rows.len(),
            params.join(", ")
        )
    }
}

fn edge_list(g: &crate::graph::CausalGraph) -> Vec<(String, String)> {
    g.edges().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

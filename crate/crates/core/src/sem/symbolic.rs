//! Symbolic expansion of linear structural equations.
//!
//! [`root_form`] substitutes equations into each other until the target is
//! written over the roots of the intervened graph. Coefficients are linear
//! forms in the predictor parameters ([`SymCoef`]), so the expansion of a
//! hypothesis class `R = Σ θ_i V_i` keeps its dependence on `θ` explicit.

use std::collections::HashMap;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::constraint::INTERCEPT_PARAM;
use crate::expr::{sigmoid, Expr, NoiseSpec, Term};
use crate::graph::CausalGraph;
use crate::stats::{self, LinearFit};

use super::{SEModel, SampleMatrix, SemError};

const EPS: f64 = 1e-12;

/// `value + Σ params[k] · θ_k`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SymCoef {
    pub value: f64,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub params: IndexMap<String, f64>,
}

impl SymCoef {
    pub fn constant(value: f64) -> Self {
        SymCoef { value, params: IndexMap::new() }
    }

    pub fn param(name: &str) -> Self {
        SymCoef {
            value: 0.0,
            params: IndexMap::from([(name.to_string(), 1.0)]),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0.0 && self.params.values().all(|&v| v == 0.0)
    }

    pub fn is_numeric(&self) -> bool {
        self.params.values().all(|&v| v == 0.0)
    }

    pub fn param_coeff(&self, name: &str) -> f64 {
        self.params.get(name).copied().unwrap_or(0.0)
    }

    fn add_scaled(&mut self, other: &SymCoef, k: f64) {
        self.value += k * other.value;
        for (name, v) in &other.params {
            *self.params.entry(name.clone()).or_insert(0.0) += k * v;
        }
    }

    /// Value at a concrete parameter vector.
    pub fn eval(&self, theta: &HashMap<String, f64>) -> f64 {
        self.value
            + self
                .params
                .iter()
                .map(|(k, v)| v * theta.get(k).copied().unwrap_or(0.0))
                .sum::<f64>()
    }
}

impl fmt::Display for SymCoef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        for (name, &c) in &self.params {
            if c == 0.0 {
                continue;
            }
            parts.push(if c == 1.0 {
                name.clone()
            } else if c == -1.0 {
                format!("-{name}")
            } else {
                format!("{c}*{name}")
            });
        }
        if self.value != 0.0 || parts.is_empty() {
            parts.push(self.value.to_string());
        }
        f.write_str(&parts.join(" + ").replace("+ -", "- "))
    }
}

/// The target written over roots of the (intervened) graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootForm {
    pub target: String,
    pub interventions: Vec<String>,
    /// Coefficients of non-intervened roots.
    pub terms: IndexMap<String, SymCoef>,
    /// Coefficients of intervened nodes, kept apart because constraints read
    /// exactly these.
    pub fixed: IndexMap<String, SymCoef>,
    /// Coefficients of additive noise written inline in a non-root equation,
    /// keyed by the owning node.
    pub noise: IndexMap<String, SymCoef>,
    pub constant: SymCoef,
    /// Mean of each inline noise term.
    #[serde(skip_serializing_if = "IndexMap::is_empty", default)]
    pub noise_means: IndexMap<String, f64>,
}

impl RootForm {
    /// Coefficient of `name` in either the root or intervened map.
    pub fn coefficient(&self, name: &str) -> SymCoef {
        self.terms
            .get(name)
            .or_else(|| self.fixed.get(name))
            .cloned()
            .unwrap_or_default()
    }

    /// Evaluates a parameter-free root form from root and intervened values.
    /// Returns `None` if a value is missing, the form still depends on
    /// parameters, or it carries inline noise.
    pub fn evaluate(&self, value_of: impl Fn(&str) -> Option<f64>) -> Option<f64> {
        if !self.noise.is_empty() || !self.constant.is_numeric() {
            return None;
        }
        let mut acc = self.constant.value;
        for (name, c) in self.terms.iter().chain(&self.fixed) {
            if !c.is_numeric() {
                return None;
            }
            acc += c.value * value_of(name)?;
        }
        Some(acc)
    }
}

#[derive(Debug, Clone, Default)]
struct NumericForm {
    terms: HashMap<usize, f64>,
    fixed: HashMap<usize, f64>,
    noise: HashMap<usize, f64>,
    constant: f64,
}

impl NumericForm {
    fn add_scaled(&mut self, other: &NumericForm, k: f64) {
        for (dst, src) in [
            (&mut self.terms, &other.terms),
            (&mut self.fixed, &other.fixed),
            (&mut self.noise, &other.noise),
        ] {
            for (&i, &v) in src {
                *dst.entry(i).or_insert(0.0) += k * v;
            }
        }
        self.constant += k * other.constant;
    }
}

struct Expander<'a> {
    model: &'a SEModel,
    graph: CausalGraph,
    intervened: Vec<bool>,
    memo: HashMap<usize, NumericForm>,
    noise_means: HashMap<usize, f64>,
}

impl Expander<'_> {
    fn form(&mut self, idx: usize) -> Result<NumericForm, SemError> {
        if let Some(f) = self.memo.get(&idx) {
            return Ok(f.clone());
        }
        let mut out = NumericForm::default();
        if self.intervened[idx] {
            out.fixed.insert(idx, 1.0);
        } else if self.graph.parent_indices(idx).is_empty() {
            out.terms.insert(idx, 1.0);
        } else {
            let name = self.graph.name(idx).to_string();
            let eq = self
                .model
                .equation_at(idx)
                .ok_or_else(|| SemError::MissingEquation(name.clone()))?;
            let parts = eq
                .linear_parts()
                .map_err(|t| SemError::NonlinearEquation { node: name.clone(), term: t.to_string() })?;
            out.constant = parts.constant;
            for (var, c) in &parts.coeffs {
                let j = self.graph.index_of(var)?;
                let sub = self.form(j)?;
                out.add_scaled(&sub, *c);
            }
            if let Some(noise) = parts.noise {
                out.noise.insert(idx, 1.0);
                self.noise_means.insert(idx, noise.mean);
            }
        }
        self.memo.insert(idx, out.clone());
        Ok(out)
    }
}

/// Expands `target` over the roots of the graph with incoming edges of
/// `interventions` removed. Every equation upstream of the target must be
/// linear. A predictor with a hypothesis class expands to coefficients that
/// are linear forms in its parameters.
pub fn root_form<S: AsRef<str>>(
    m: &SEModel,
    target: &str,
    interventions: &[S],
) -> Result<RootForm, SemError> {
    let g = m.graph();
    let target_idx = g.index_of(target)?;
    let graph = g.intervene(interventions)?;
    let mut intervened = vec![false; g.len()];
    for s in interventions {
        intervened[g.index_of(s.as_ref())?] = true;
    }
    let mut ex = Expander {
        model: m,
        graph,
        intervened,
        memo: HashMap::new(),
        noise_means: HashMap::new(),
    };

    // (parameter name or none, numeric form) pairs summed symbolically.
    let mut pieces: Vec<(Option<String>, NumericForm)> = Vec::new();
    match m.hypothesis(target).filter(|_| !ex.intervened[target_idx]) {
        Some(h) => {
            for (input, theta) in h.inputs.iter().zip(h.theta_names()) {
                let j = g.index_of(input)?;
                pieces.push((Some(theta), ex.form(j)?));
            }
            if h.intercept {
                let unit = NumericForm { constant: 1.0, ..Default::default() };
                pieces.push((Some(INTERCEPT_PARAM.to_string()), unit));
            }
        }
        None => pieces.push((None, ex.form(target_idx)?)),
    }

    let mut terms: IndexMap<String, SymCoef> = IndexMap::new();
    let mut fixed: IndexMap<String, SymCoef> = IndexMap::new();
    let mut noise: IndexMap<String, SymCoef> = IndexMap::new();
    let mut constant = SymCoef::default();
    let coeff_of = |param: &Option<String>| match param {
        Some(p) => SymCoef::param(p),
        None => SymCoef::constant(1.0),
    };
    for idx in 0..g.len() {
        let name = g.name(idx);
        for (dst, pick) in [
            (&mut terms, 0usize),
            (&mut fixed, 1),
            (&mut noise, 2),
        ] {
            let mut acc = SymCoef::default();
            let mut present = false;
            for (param, f) in &pieces {
                let map = match pick {
                    0 => &f.terms,
                    1 => &f.fixed,
                    _ => &f.noise,
                };
                if let Some(&v) = map.get(&idx) {
                    present = true;
                    acc.add_scaled(&coeff_of(param), v);
                }
            }
            if present {
                acc.params.retain(|_, v| *v != 0.0);
                if !acc.is_zero() || pick == 1 {
                    dst.insert(name.to_string(), acc);
                }
            }
        }
    }
    for (param, f) in &pieces {
        constant.add_scaled(&coeff_of(param), f.constant);
    }
    constant.params.retain(|_, v| *v != 0.0);

    let mut noise_means = IndexMap::new();
    for name in noise.keys() {
        let idx = g.index_of(name)?;
        noise_means.insert(name.clone(), ex.noise_means[&idx]);
    }
    Ok(RootForm {
        target: target.to_string(),
        interventions: interventions.iter().map(|s| s.as_ref().to_string()).collect(),
        terms,
        fixed,
        noise,
        constant,
        noise_means,
    })
}

/// `E[X | do(P = p)] = intercept + slope · p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterventionalExpectation {
    pub slope: f64,
    pub intercept: f64,
}

impl InterventionalExpectation {
    pub fn at(&self, p: f64) -> f64 {
        self.intercept + self.slope * p
    }
}

/// Mean of `x` under `do(p)` as an affine function of the intervened value.
///
/// Requires `p` to enter `x` additively and linearly. Nonlinear terms that do
/// not depend on `p` are allowed only when their mean is available in closed
/// form (constant arguments).
pub fn interventional_expectation(
    m: &SEModel,
    x: &str,
    p: &str,
) -> Result<InterventionalExpectation, SemError> {
    let g = m.graph();
    let xi = g.index_of(x)?;
    let pi = g.index_of(p)?;
    let surgered = g.intervene(&[p])?;
    let depends = surgered.descendant_mask(pi);
    let mut prop = MeanPropagation {
        model: m,
        graph: &surgered,
        proxy: pi,
        depends: &depends,
        memo: HashMap::new(),
    };
    let (intercept, slope) = prop.node(xi)?;
    Ok(InterventionalExpectation { slope, intercept })
}

struct MeanPropagation<'a> {
    model: &'a SEModel,
    graph: &'a CausalGraph,
    proxy: usize,
    depends: &'a [bool],
    memo: HashMap<usize, (f64, f64)>,
}

impl MeanPropagation<'_> {
    /// (mean at p = 0, slope in p).
    fn node(&mut self, idx: usize) -> Result<(f64, f64), SemError> {
        if idx == self.proxy {
            return Ok((0.0, 1.0));
        }
        if let Some(&v) = self.memo.get(&idx) {
            return Ok(v);
        }
        let eq = self
            .model
            .equation_at(idx)
            .ok_or_else(|| SemError::MissingEquation(self.graph.name(idx).to_string()))?;
        let v = self.expr(idx, eq)?;
        self.memo.insert(idx, v);
        Ok(v)
    }

    fn expr_depends(&self, e: &Expr) -> Result<bool, SemError> {
        for v in e.variables() {
            if self.depends[self.graph.index_of(v)?] {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn expr(&mut self, owner: usize, e: &Expr) -> Result<(f64, f64), SemError> {
        let node = self.graph.name(owner).to_string();
        let proxy = self.graph.name(self.proxy).to_string();
        let nonlinear = |t: &Term| SemError::NonlinearEquation { node: node.clone(), term: t.to_string() };
        let nonadditive = |t: &Term| SemError::NonadditiveProxyInfluence {
            proxy: proxy.clone(),
            node: node.clone(),
            term: t.to_string(),
        };
        let mut mean = 0.0;
        let mut slope = 0.0;
        for t in &e.terms {
            let (m, s) = match t {
                Term::Const(c) => (*c, 0.0),
                Term::Var(v) => self.node(self.graph.index_of(v)?)?,
                Term::Scaled(c, v) => {
                    let (m, s) = self.node(self.graph.index_of(v)?)?;
                    (c * m, c * s)
                }
                Term::Sigmoid(inner) => {
                    if self.expr_depends(inner)? {
                        return Err(nonadditive(t));
                    }
                    match inner.constant_value() {
                        Some(v) => (sigmoid(v), 0.0),
                        None => return Err(nonlinear(t)),
                    }
                }
                Term::Noise(NoiseSpec::Gaussian { mean, .. }) => self.expr(owner, mean)?,
                Term::Noise(NoiseSpec::BernoulliPm { prob }) => {
                    if self.expr_depends(prob)? {
                        return Err(nonadditive(t));
                    }
                    match prob.constant_value() {
                        Some(q) => (2.0 * q - 1.0, 0.0),
                        None => return Err(nonlinear(t)),
                    }
                }
                Term::Noise(NoiseSpec::Mixture { mean1, mean2, logit, .. }) => {
                    if self.expr_depends(logit)? {
                        return Err(nonadditive(t));
                    }
                    let Some(l) = logit.constant_value() else {
                        return Err(nonlinear(t));
                    };
                    let w = sigmoid(l);
                    let (m1, s1) = self.expr(owner, mean1)?;
                    let (m2, s2) = self.expr(owner, mean2)?;
                    if (s1 - s2).abs() > EPS * (1.0 + s1.abs().max(s2.abs())) {
                        return Err(nonadditive(t));
                    }
                    (w * m1 + (1.0 - w) * m2, s1)
                }
            };
            mean += m;
            slope += s;
        }
        Ok((mean, slope))
    }
}

/// Least-squares fit of `E[x | p]` from observational data.
pub fn conditional_expectation_fit(
    data: &SampleMatrix,
    x: &str,
    p: &str,
) -> Result<LinearFit, SemError> {
    let xs = data.require(x)?;
    let ps = data.require(p)?;
    stats::simple_ols(ps, xs).ok_or(SemError::DegenerateDesign(p.to_string()))
}

use std::collections::HashSet;

use crate::constraint::HypothesisClass;
use crate::expr::{Expr, NoiseSpec, Term};
use crate::graph::{CausalGraph, NodeRole};

use super::SemError;

/// A causal graph together with one structural equation per node.
///
/// Predictor nodes may instead carry a [`HypothesisClass`], a parameterised
/// linear equation whose coefficients are to be learned. Nodes may also be
/// left without an equation, which is enough for graph audits; sampling and
/// symbolic expansion report [`SemError::MissingEquation`] when they need one.
#[derive(Debug, Clone)]
pub struct SEModel {
    name: String,
    graph: CausalGraph,
    equations: Vec<Option<Expr>>,
    hypotheses: Vec<HypothesisClass>,
}

impl SEModel {
    /// Builds and validates a model.
    pub fn new(
        name: impl Into<String>,
        graph: CausalGraph,
        equations: Vec<(String, Expr)>,
        hypotheses: Vec<HypothesisClass>,
    ) -> Result<Self, SemError> {
        let mut slots: Vec<Option<Expr>> = vec![None; graph.len()];
        for (node, expr) in equations {
            let idx = graph
                .index_of(&node)
                .map_err(|_| SemError::OrphanEquation(node.clone()))?;
            if slots[idx].is_some() {
                return Err(SemError::DuplicateEquation(node));
            }
            slots[idx] = Some(expr);
        }
        let model = SEModel {
            name: name.into(),
            graph,
            equations: slots,
            hypotheses,
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks parent-only references, noise parameters and hypothesis
    /// declarations.
    pub fn validate(&self) -> Result<(), SemError> {
        for (idx, eq) in self.equations.iter().enumerate() {
            let Some(eq) = eq else { continue };
            let node = self.graph.name(idx);
            let parents: HashSet<&str> = self
                .graph
                .parent_indices(idx)
                .iter()
                .map(|&p| self.graph.name(p))
                .collect();
            for var in eq.variables() {
                if !parents.contains(var) {
                    return Err(SemError::NonParentReference {
                        node: node.to_string(),
                        variable: var.to_string(),
                    });
                }
            }
            if let Some(bad) = eq.literals().into_iter().find(|v| !v.is_finite()) {
                return Err(SemError::BadNoiseParam {
                    node: node.to_string(),
                    reason: format!("non-finite constant {bad}"),
                });
            }
            check_noise(node, eq)?;
        }

        let mut seen = HashSet::new();
        for h in &self.hypotheses {
            let idx = self
                .graph
                .index_of(&h.predictor)
                .map_err(|_| SemError::OrphanEquation(h.predictor.clone()))?;
            if !seen.insert(idx) {
                return Err(SemError::DuplicateEquation(h.predictor.clone()));
            }
            let role = self.graph.role_at(idx);
            if role != NodeRole::Predictor {
                return Err(SemError::Hypothesis(format!(
                    "`{}` has role {role}; hypothesis classes attach to predictor nodes",
                    h.predictor
                )));
            }
            if self.equations[idx].is_some() {
                return Err(SemError::DuplicateEquation(h.predictor.clone()));
            }
            let mut parents: Vec<&str> = self.graph.parents(&h.predictor)?;
            let mut inputs: Vec<&str> = h.inputs.iter().map(String::as_str).collect();
            parents.sort_unstable();
            inputs.sort_unstable();
            if parents != inputs {
                return Err(SemError::Hypothesis(format!(
                    "inputs of `{}` ({}) differ from its parents ({})",
                    h.predictor,
                    inputs.join(", "),
                    parents.join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn equation(&self, node: &str) -> Option<&Expr> {
        let idx = self.graph.index_of(node).ok()?;
        self.equations[idx].as_ref()
    }

    pub(crate) fn equation_at(&self, idx: usize) -> Option<&Expr> {
        self.equations[idx].as_ref()
    }

    /// Equations in node declaration order.
    pub fn equations(&self) -> impl Iterator<Item = (&str, &Expr)> + '_ {
        self.equations
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.as_ref().map(|e| (self.graph.name(i), e)))
    }

    pub fn hypotheses(&self) -> &[HypothesisClass] {
        &self.hypotheses
    }

    pub fn hypothesis(&self, predictor: &str) -> Option<&HypothesisClass> {
        self.hypotheses.iter().find(|h| h.predictor == predictor)
    }

    /// The hypothesis class when the model declares exactly one.
    pub fn sole_hypothesis(&self) -> Result<&HypothesisClass, SemError> {
        match self.hypotheses.as_slice() {
            [h] => Ok(h),
            [] => Err(SemError::Hypothesis("model declares no predictor hypothesis".into())),
            _ => Err(SemError::Hypothesis(
                "model declares several predictor hypotheses; name one".into(),
            )),
        }
    }

    pub(crate) fn is_hypothesis_node(&self, idx: usize) -> bool {
        let name = self.graph.name(idx);
        self.hypotheses.iter().any(|h| h.predictor == name)
    }

    /// Nodes that are sampled: everything with a concrete equation.
    pub(crate) fn sampled_nodes(&self) -> Vec<usize> {
        (0..self.graph.len())
            .filter(|&i| self.equations[i].is_some())
            .collect()
    }
}

fn check_noise(node: &str, expr: &Expr) -> Result<(), SemError> {
    let bad = |reason: String| SemError::BadNoiseParam {
        node: node.to_string(),
        reason,
    };
    for t in &expr.terms {
        match t {
            Term::Const(_) | Term::Var(_) | Term::Scaled(..) => {}
            Term::Sigmoid(e) => check_noise(node, e)?,
            Term::Noise(spec) => {
                match spec {
                    NoiseSpec::Gaussian { sd, .. } => {
                        if !(*sd > 0.0 && sd.is_finite()) {
                            return Err(bad(format!("standard deviation {sd} is not positive")));
                        }
                    }
                    NoiseSpec::Mixture { sd1, sd2, .. } => {
                        for sd in [sd1, sd2] {
                            if !(*sd > 0.0 && sd.is_finite()) {
                                return Err(bad(format!("standard deviation {sd} is not positive")));
                            }
                        }
                    }
                    NoiseSpec::BernoulliPm { prob } => {
                        let range = prob.interval();
                        if !(range.lo >= 0.0 && range.hi <= 1.0) {
                            return Err(bad(format!(
                                "probability `{prob}` is not guaranteed to lie in [0, 1]"
                            )));
                        }
                    }
                }
                for sub in spec.subexprs() {
                    check_noise(node, sub)?;
                }
            }
        }
    }
    Ok(())
}

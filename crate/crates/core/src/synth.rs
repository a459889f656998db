//! Random structural equation models for property tests.

use rand::Rng;

use crate::constraint::HypothesisClass;
use crate::expr::{Expr, NoiseSpec, Term};
use crate::graph::{CausalGraph, NodeRole};
use crate::sem::SEModel;

/// Coefficient with magnitude in `[0.3, 1.5]`, two decimals, random sign.
pub fn coefficient<R: Rng>(rng: &mut R) -> f64 {
    let mag = rng.random_range(30..=150) as f64 / 100.0;
    if rng.random_bool(0.5) {
        mag
    } else {
        -mag
    }
}

fn gaussian(mean: f64, sd: f64) -> Term {
    Term::Noise(NoiseSpec::Gaussian { mean: Box::new(Expr::constant(mean)), sd })
}

/// A random root noise term: Gaussian, ±1 coin or two-component mixture.
fn root_noise<R: Rng>(rng: &mut R) -> Term {
    match rng.random_range(0..3) {
        0 => gaussian(rng.random_range(-100..=100) as f64 / 100.0, rng.random_range(50..=200) as f64 / 100.0),
        1 => Term::Noise(NoiseSpec::BernoulliPm {
            prob: Box::new(Expr::constant(rng.random_range(20..=80) as f64 / 100.0)),
        }),
        _ => Term::Noise(NoiseSpec::Mixture {
            mean1: Box::new(Expr::constant(rng.random_range(0..=200) as f64 / 100.0)),
            sd1: rng.random_range(50..=150) as f64 / 100.0,
            mean2: Box::new(Expr::constant(-(rng.random_range(0..=200) as f64) / 100.0)),
            sd2: rng.random_range(50..=150) as f64 / 100.0,
            logit: Box::new(Expr::constant(rng.random_range(-100..=100) as f64 / 100.0)),
        }),
    }
}

/// Random DAG over `V0..V{n-1}` (edges only from lower to higher index, each
/// present with probability `edge_prob`). Roots draw Gaussian noise; every
/// other node is a deterministic linear function of its parents plus a
/// constant, so root values determine all others exactly.
pub fn random_linear_sem<R: Rng>(rng: &mut R, nodes: usize, edge_prob: f64) -> SEModel {
    let names: Vec<String> = (0..nodes).map(|i| format!("V{i}")).collect();
    let mut edges = Vec::new();
    let mut equations = Vec::new();
    for j in 0..nodes {
        let parents: Vec<usize> = (0..j).filter(|_| rng.random_bool(edge_prob)).collect();
        let expr = if parents.is_empty() {
            Expr::new(vec![gaussian(rng.random_range(-100..=100) as f64 / 100.0, 1.0)])
        } else {
            let mut terms: Vec<Term> = parents.iter().map(|&i| Term::Scaled(coefficient(rng), names[i].clone())).collect();
            terms.push(Term::Const(rng.random_range(-100..=100) as f64 / 100.0));
            Expr::new(terms)
        };
        for &i in &parents {
            edges.push((names[i].clone(), names[j].clone()));
        }
        equations.push((names[j].clone(), expr));
    }
    let graph = CausalGraph::new(names.iter().map(|n| (n.clone(), NodeRole::Feature)), edges)
        .expect("forward edges form a DAG");
    SEModel::new("random_linear", graph, equations, Vec::new()).expect("generated model is valid")
}

/// A random model in which `P` enters every feature additively and linearly.
#[derive(Debug, Clone)]
pub struct ProxyModel {
    pub model: SEModel,
    pub proxy: String,
    pub features: Vec<String>,
}

/// Protected `A`, one or two latent roots with non-Gaussian noise, proxy
/// `P = a·A + b·L1 + noise`, an optional mediator `M` of `P`, and one or two
/// features with a directed path from `P`. The predictor `R` reads `P` and
/// the features.
pub fn random_proxy_sem<R: Rng>(rng: &mut R) -> ProxyModel {
    let mut nodes: Vec<(String, NodeRole)> = vec![("A".into(), NodeRole::Protected)];
    let mut equations: Vec<(String, Expr)> = Vec::new();
    let a_noise = if rng.random_bool(0.5) {
        Term::Noise(NoiseSpec::BernoulliPm { prob: Box::new(Expr::constant(0.5)) })
    } else {
        gaussian(0.0, 1.0)
    };
    equations.push(("A".into(), Expr::new(vec![a_noise])));

    let latents: Vec<String> = (1..=rng.random_range(1..=2)).map(|i| format!("L{i}")).collect();
    for l in &latents {
        nodes.push((l.clone(), NodeRole::Latent));
        equations.push((l.clone(), Expr::new(vec![root_noise(rng)])));
    }

    nodes.push(("P".into(), NodeRole::Proxy));
    let mut p_terms = vec![Term::Scaled(coefficient(rng), "A".into())];
    if rng.random_bool(0.5) {
        p_terms.push(Term::Scaled(coefficient(rng), latents[0].clone()));
    }
    p_terms.push(gaussian(0.0, 1.0));
    equations.push(("P".into(), Expr::new(p_terms)));

    let mediator = rng.random_bool(0.5);
    if mediator {
        nodes.push(("M".into(), NodeRole::Latent));
        let mut terms = vec![Term::Scaled(coefficient(rng), "P".into())];
        if rng.random_bool(0.5) {
            terms.push(Term::Scaled(coefficient(rng), "A".into()));
        }
        terms.push(root_noise(rng));
        equations.push(("M".into(), Expr::new(terms)));
    }

    let features: Vec<String> = (1..=rng.random_range(1..=2)).map(|i| format!("X{i}")).collect();
    for x in &features {
        nodes.push((x.clone(), NodeRole::Feature));
        let via = if mediator && rng.random_bool(0.5) { "M" } else { "P" };
        let mut terms = vec![Term::Scaled(coefficient(rng), via.into())];
        if rng.random_bool(0.7) {
            terms.push(Term::Scaled(coefficient(rng), "A".into()));
        }
        for l in &latents {
            if rng.random_bool(0.5) {
                terms.push(Term::Scaled(coefficient(rng), l.clone()));
            }
        }
        terms.push(gaussian(0.0, rng.random_range(50..=150) as f64 / 100.0));
        equations.push((x.clone(), Expr::new(terms)));
    }
    nodes.push(("R".into(), NodeRole::Predictor));

    let mut edges: Vec<(String, String)> = Vec::new();
    for (node, e) in &equations {
        for v in e.variables() {
            edges.push((v.to_string(), node.clone()));
        }
    }
    let mut inputs = vec!["P".to_string()];
    inputs.extend(features.iter().cloned());
    for i in &inputs {
        edges.push((i.clone(), "R".into()));
    }
    let graph = CausalGraph::new(nodes, edges).expect("construction is acyclic");
    let h = HypothesisClass { predictor: "R".into(), inputs, intercept: false };
    let model = SEModel::new("random_proxy", graph, equations, vec![h]).expect("generated model is valid");
    ProxyModel { model, proxy: "P".into(), features }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn generators_produce_valid_models() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..50 {
            let m = random_linear_sem(&mut rng, 8, 0.4);
            assert_eq!(m.graph().len(), 8);
            let pm = random_proxy_sem(&mut rng);
            for x in &pm.features {
                assert!(pm.model.graph().directed_paths("P", x).unwrap().len() == 1);
            }
        }
    }
}

//! Ancestral sampling, observational and interventional.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::expr::CompiledExpr;

use super::matrix::{Provenance, SampleMatrix};
use super::rng::{derive_seed, NoiseStream};
use super::{SEModel, SemError};

/// Replacement for a node's structural equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Intervention {
    /// `do(V = v)`: point mass.
    Point(f64),
    /// `do(V = η)` with `η` an independent per-row draw from the
    /// pre-intervention marginal of `V`.
    Marginal,
}

const MARGINAL_TAG: u64 = 0x6d61_7267_696e_616c;
const ROWS_PER_TASK: usize = 2048;

enum Slot {
    Skip,
    Equation(CompiledExpr),
    Point(f64),
    /// Index into the per-row marginal draws.
    Marginal(usize),
}

struct MarginalPlan {
    target: usize,
    seed: u64,
    /// Ancestors of the target (inclusive) in topological order.
    order: Vec<usize>,
}

/// Draws `n` rows from the model. Identical `(model, n, seed)` give a
/// bit-identical matrix regardless of thread count.
pub fn sample(m: &SEModel, n: usize, seed: u64) -> Result<SampleMatrix, SemError> {
    do_sample(m, &[] as &[(&str, Intervention)], n, seed)
}

/// Draws `n` rows from the model after replacing the equations of the
/// intervened nodes.
pub fn do_sample<S: AsRef<str>>(
    m: &SEModel,
    interventions: &[(S, Intervention)],
    n: usize,
    seed: u64,
) -> Result<SampleMatrix, SemError> {
    let g = m.graph();
    let mut overrides: HashMap<usize, Intervention> = HashMap::new();
    for (name, iv) in interventions {
        let idx = g.index_of(name.as_ref())?;
        if let Intervention::Point(v) = iv {
            if !v.is_finite() {
                return Err(SemError::Data(format!("intervention value {v} is not finite")));
            }
        }
        overrides.insert(idx, *iv);
    }

    let mut columns: Vec<usize> = m.sampled_nodes();
    for &idx in overrides.keys() {
        if !columns.contains(&idx) {
            columns.push(idx);
        }
    }
    columns.sort_unstable();

    let slots_by_name: HashMap<String, usize> = g
        .names()
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i))
        .collect();
    let compile = |idx: usize| -> Result<CompiledExpr, SemError> {
        let eq = m
            .equation_at(idx)
            .ok_or_else(|| SemError::MissingEquation(g.name(idx).to_string()))?;
        eq.compile(&slots_by_name)
            .map_err(|v| SemError::NonParentReference {
                node: g.name(idx).to_string(),
                variable: v,
            })
    };

    // Only ancestors in the surgered graph are evaluated; nodes upstream of
    // an intervention alone are skipped.
    let surgered = g.intervene(
        &overrides
            .keys()
            .map(|&i| g.name(i).to_string())
            .collect::<Vec<_>>(),
    )?;
    let mut needed = vec![false; g.len()];
    for &c in &columns {
        for (i, a) in surgered.ancestor_mask(c).into_iter().enumerate() {
            needed[i] |= a;
        }
    }

    let mut marginals = Vec::new();
    let mut slots = Vec::with_capacity(g.len());
    for (idx, &keep) in needed.iter().enumerate() {
        let slot = if !keep {
            Slot::Skip
        } else {
            match overrides.get(&idx) {
                Some(Intervention::Point(v)) => Slot::Point(*v),
                Some(Intervention::Marginal) => {
                    let mask = g.ancestor_mask(idx);
                    let order: Vec<usize> = g
                        .topological_indices()
                        .iter()
                        .copied()
                        .filter(|&i| mask[i])
                        .collect();
                    marginals.push(MarginalPlan {
                        target: idx,
                        seed: derive_seed(seed, MARGINAL_TAG ^ idx as u64),
                        order,
                    });
                    Slot::Marginal(marginals.len() - 1)
                }
                None => {
                    if m.is_hypothesis_node(idx) {
                        return Err(SemError::MissingEquation(g.name(idx).to_string()));
                    }
                    Slot::Equation(compile(idx)?)
                }
            }
        };
        slots.push(slot);
    }
    // Marginal draws evaluate the unintervened equations of the target's
    // ancestors.
    let mut marginal_exprs: HashMap<usize, CompiledExpr> = HashMap::new();
    for plan in &marginals {
        for &i in &plan.order {
            if let std::collections::hash_map::Entry::Vacant(e) = marginal_exprs.entry(i) {
                e.insert(compile(i)?);
            }
        }
    }

    let order: Vec<usize> = g.topological_indices().to_vec();
    let k = columns.len();
    let mut flat = vec![0.0f64; n * k];
    if k > 0 {
        flat.par_chunks_mut(ROWS_PER_TASK * k)
            .enumerate()
            .for_each(|(chunk, out)| {
                let mut values = vec![f64::NAN; g.len()];
                let mut scratch = vec![f64::NAN; g.len()];
                let mut etas = vec![0.0; marginals.len()];
                for (r, row_out) in out.chunks_mut(k).enumerate() {
                    let row = (chunk * ROWS_PER_TASK + r) as u64;
                    for (j, plan) in marginals.iter().enumerate() {
                        for &i in &plan.order {
                            let mut rng = NoiseStream::new(plan.seed, i as u64, row);
                            scratch[i] = marginal_exprs[&i].eval(&scratch, &mut rng);
                        }
                        etas[j] = scratch[plan.target];
                    }
                    for &i in &order {
                        values[i] = match &slots[i] {
                            Slot::Skip => continue,
                            Slot::Point(v) => *v,
                            Slot::Marginal(j) => etas[*j],
                            Slot::Equation(e) => {
                                let mut rng = NoiseStream::new(seed, i as u64, row);
                                e.eval(&values, &mut rng)
                            }
                        };
                    }
                    for (dst, &c) in row_out.iter_mut().zip(&columns) {
                        *dst = values[c];
                    }
                }
            });
    }

    let mut data = vec![Vec::with_capacity(n); k];
    for row in flat.chunks(k.max(1)).take(if k == 0 { 0 } else { n }) {
        for (col, v) in data.iter_mut().zip(row) {
            col.push(*v);
        }
    }

    let mut described: Vec<(usize, String)> = overrides
        .iter()
        .map(|(&i, iv)| {
            let name = g.name(i);
            let text = match iv {
                Intervention::Point(v) => format!("{name}={v}"),
                Intervention::Marginal => {
                    let s = marginals.iter().find(|p| p.target == i).map_or(0, |p| p.seed);
                    format!("{name}~marginal(seed={s})")
                }
            };
            (i, text)
        })
        .collect();
    described.sort();

    SampleMatrix::new(
        columns.iter().map(|&i| g.name(i).to_string()).collect(),
        data,
        seed,
        Provenance {
            model: m.name().to_string(),
            interventions: described.into_iter().map(|(_, s)| s).collect(),
        },
    )
}

//! Right-hand sides of structural equations.
//!
//! The language is deliberately small: sums of constants, (scaled) parent
//! references, logistic sigmoids and three noise families. Anything else is
//! rejected at parse time rather than approximated.

use std::collections::HashMap;
use std::fmt;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

/// A sum of terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Const(f64),
    /// A parent reference with implicit coefficient 1.
    Var(String),
    Scaled(f64, String),
    Sigmoid(Box<Expr>),
    Noise(NoiseSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    /// `N(mean, sd^2)`.
    Gaussian { mean: Box<Expr>, sd: f64 },
    /// `+1` with probability `prob`, `-1` otherwise.
    BernoulliPm { prob: Box<Expr> },
    /// `N(mean1, sd1^2)` with weight `sigmoid(logit)`, else `N(mean2, sd2^2)`.
    Mixture {
        mean1: Box<Expr>,
        sd1: f64,
        mean2: Box<Expr>,
        sd2: f64,
        logit: Box<Expr>,
    },
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// First two moments of the additive noise carried by a linear equation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseMoments {
    pub mean: f64,
    pub variance: f64,
}

/// `constant + sum(coeff * var) + noise`, with coefficients merged per name in
/// first-appearance order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearParts {
    pub constant: f64,
    pub coeffs: Vec<(String, f64)>,
    pub noise: Option<NoiseMoments>,
}

impl LinearParts {
    fn add_coeff(&mut self, name: &str, c: f64) {
        match self.coeffs.iter_mut().find(|(n, _)| n == name) {
            Some((_, v)) => *v += c,
            None => self.coeffs.push((name.to_string(), c)),
        }
    }

    fn add_noise(&mut self, mean: f64, variance: f64) {
        let n = self.noise.get_or_insert_with(NoiseMoments::default);
        n.mean += mean;
        n.variance += variance;
    }

    fn absorb(&mut self, other: LinearParts) {
        self.constant += other.constant;
        for (name, c) in other.coeffs {
            self.add_coeff(&name, c);
        }
        if let Some(n) = other.noise {
            self.add_noise(n.mean, n.variance);
        }
    }
}

/// Closed interval bound on the value of an expression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Expr {
    pub fn new(terms: Vec<Term>) -> Self {
        Expr { terms }
    }

    pub fn constant(c: f64) -> Self {
        Expr::new(vec![Term::Const(c)])
    }

    pub fn var(name: impl Into<String>) -> Self {
        Expr::new(vec![Term::Var(name.into())])
    }

    /// Every variable referenced anywhere in the expression, in order of
    /// first appearance, without duplicates.
    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit_vars(&mut |v| {
            if !out.contains(&v) {
                out.push(v);
            }
        });
        out
    }

    fn visit_vars<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        for t in &self.terms {
            match t {
                Term::Const(_) => {}
                Term::Var(v) | Term::Scaled(_, v) => f(v),
                Term::Sigmoid(e) => e.visit_vars(f),
                Term::Noise(n) => n.subexprs().into_iter().for_each(|e| e.visit_vars(f)),
            }
        }
    }

    pub fn is_random(&self) -> bool {
        self.terms.iter().any(|t| match t {
            Term::Noise(_) => true,
            Term::Sigmoid(e) => e.is_random(),
            _ => false,
        })
    }

    /// Neither random nor dependent on any variable.
    pub fn is_constant(&self) -> bool {
        !self.is_random() && self.variables().is_empty()
    }

    /// Value of a constant expression.
    pub fn constant_value(&self) -> Option<f64> {
        if !self.is_constant() {
            return None;
        }
        Some(self.terms.iter().map(|t| match t {
            Term::Const(c) => *c,
            Term::Sigmoid(e) => sigmoid(e.constant_value().unwrap_or(f64::NAN)),
            _ => unreachable!("constant expression has only constant terms"),
        }).sum())
    }

    /// Every number that appears literally in the expression.
    pub fn literals(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_literals(&mut out);
        out
    }

    fn collect_literals(&self, out: &mut Vec<f64>) {
        for t in &self.terms {
            match t {
                Term::Const(c) | Term::Scaled(c, _) => out.push(*c),
                Term::Var(_) => {}
                Term::Sigmoid(e) => e.collect_literals(out),
                Term::Noise(n) => {
                    match n {
                        NoiseSpec::Gaussian { sd, .. } => out.push(*sd),
                        NoiseSpec::Mixture { sd1, sd2, .. } => out.extend([*sd1, *sd2]),
                        NoiseSpec::BernoulliPm { .. } => {}
                    }
                    for e in n.subexprs() {
                        e.collect_literals(out);
                    }
                }
            }
        }
    }

    /// Splits the expression into a constant, parent coefficients and an
    /// additive noise term. Fails on the first term that does not decompose.
    pub fn linear_parts(&self) -> Result<LinearParts, &Term> {
        let mut out = LinearParts::default();
        for t in &self.terms {
            match t {
                Term::Const(c) => out.constant += c,
                Term::Var(v) => out.add_coeff(v, 1.0),
                Term::Scaled(c, v) => out.add_coeff(v, *c),
                Term::Sigmoid(e) => match e.constant_value() {
                    Some(v) => out.constant += sigmoid(v),
                    None => return Err(t),
                },
                Term::Noise(NoiseSpec::Gaussian { mean, sd }) => {
                    out.absorb(mean.linear_parts()?);
                    out.add_noise(0.0, sd * sd);
                }
                Term::Noise(NoiseSpec::BernoulliPm { prob }) => match prob.constant_value() {
                    Some(p) => out.add_noise(2.0 * p - 1.0, 1.0 - (2.0 * p - 1.0).powi(2)),
                    None => return Err(t),
                },
                Term::Noise(NoiseSpec::Mixture { mean1, sd1, mean2, sd2, logit }) => {
                    match (mean1.constant_value(), mean2.constant_value(), logit.constant_value()) {
                        (Some(m1), Some(m2), Some(l)) => {
                            let w = sigmoid(l);
                            let mean = w * m1 + (1.0 - w) * m2;
                            let second = w * (sd1 * sd1 + m1 * m1) + (1.0 - w) * (sd2 * sd2 + m2 * m2);
                            out.add_noise(mean, second - mean * mean);
                        }
                        _ => return Err(t),
                    }
                }
            }
        }
        Ok(out)
    }

    /// Conservative range of the expression when variables are unbounded.
    pub fn interval(&self) -> Interval {
        let mut acc = Interval { lo: 0.0, hi: 0.0 };
        for t in &self.terms {
            let i = match t {
                Term::Const(c) => Interval { lo: *c, hi: *c },
                Term::Sigmoid(e) => {
                    let inner = e.interval();
                    Interval { lo: sigmoid(inner.lo), hi: sigmoid(inner.hi) }
                }
                Term::Noise(NoiseSpec::BernoulliPm { .. }) => Interval { lo: -1.0, hi: 1.0 },
                Term::Var(_) | Term::Scaled(..) | Term::Noise(_) => Interval {
                    lo: f64::NEG_INFINITY,
                    hi: f64::INFINITY,
                },
            };
            acc.lo += i.lo;
            acc.hi += i.hi;
        }
        acc
    }

    /// Resolves variable names to slots for fast evaluation.
    pub fn compile(&self, slots: &HashMap<String, usize>) -> Result<CompiledExpr, String> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let slot = |v: &String| slots.get(v).copied().ok_or_else(|| v.clone());
            terms.push(match t {
                Term::Const(c) => CTerm::Const(*c),
                Term::Var(v) => CTerm::Scaled(1.0, slot(v)?),
                Term::Scaled(c, v) => CTerm::Scaled(*c, slot(v)?),
                Term::Sigmoid(e) => CTerm::Sigmoid(e.compile(slots)?),
                Term::Noise(NoiseSpec::Gaussian { mean, sd }) => CTerm::Gaussian(mean.compile(slots)?, *sd),
                Term::Noise(NoiseSpec::BernoulliPm { prob }) => CTerm::BernoulliPm(prob.compile(slots)?),
                Term::Noise(NoiseSpec::Mixture { mean1, sd1, mean2, sd2, logit }) => CTerm::Mixture {
                    mean1: mean1.compile(slots)?,
                    sd1: *sd1,
                    mean2: mean2.compile(slots)?,
                    sd2: *sd2,
                    logit: logit.compile(slots)?,
                },
            });
        }
        Ok(CompiledExpr { terms })
    }
}

impl NoiseSpec {
    pub fn subexprs(&self) -> Vec<&Expr> {
        match self {
            NoiseSpec::Gaussian { mean, .. } => vec![mean],
            NoiseSpec::BernoulliPm { prob } => vec![prob],
            NoiseSpec::Mixture { mean1, mean2, logit, .. } => vec![mean1, mean2, logit],
        }
    }
}

/// An expression with variables resolved to value slots.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    terms: Vec<CTerm>,
}

#[derive(Debug, Clone)]
enum CTerm {
    Const(f64),
    Scaled(f64, usize),
    Sigmoid(CompiledExpr),
    Gaussian(CompiledExpr, f64),
    BernoulliPm(CompiledExpr),
    Mixture {
        mean1: CompiledExpr,
        sd1: f64,
        mean2: CompiledExpr,
        sd2: f64,
        logit: CompiledExpr,
    },
}

impl CompiledExpr {
    /// Evaluates left to right; random terms consume draws from `rng` in
    /// that order, so a fixed stream yields a fixed value.
    pub fn eval<R: RngCore>(&self, values: &[f64], rng: &mut R) -> f64 {
        let mut acc = 0.0;
        for t in &self.terms {
            acc += match t {
                CTerm::Const(c) => *c,
                CTerm::Scaled(c, i) => c * values[*i],
                CTerm::Sigmoid(e) => sigmoid(e.eval(values, rng)),
                CTerm::Gaussian(mean, sd) => {
                    let m = mean.eval(values, rng);
                    let z: f64 = StandardNormal.sample(rng);
                    m + sd * z
                }
                CTerm::BernoulliPm(prob) => {
                    let p = prob.eval(values, rng);
                    if unit(rng) < p { 1.0 } else { -1.0 }
                }
                CTerm::Mixture { mean1, sd1, mean2, sd2, logit } => {
                    let w = sigmoid(logit.eval(values, rng));
                    let first = unit(rng) < w;
                    let z: f64 = StandardNormal.sample(rng);
                    if first {
                        mean1.eval(values, rng) + sd1 * z
                    } else {
                        mean2.eval(values, rng) + sd2 * z
                    }
                }
            };
        }
        acc
    }
}

/// Uniform draw on `[0, 1)` with 53 bits of precision.
fn unit<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => write!(f, "{c}"),
            Term::Var(v) => f.write_str(v),
            Term::Scaled(c, v) => write!(f, "{c}*{v}"),
            Term::Sigmoid(e) => write!(f, "sigmoid({e})"),
            Term::Noise(NoiseSpec::Gaussian { mean, sd }) => write!(f, "normal({mean}, {sd})"),
            Term::Noise(NoiseSpec::BernoulliPm { prob }) => write!(f, "bern_pm({prob})"),
            Term::Noise(NoiseSpec::Mixture { mean1, sd1, mean2, sd2, logit }) => {
                write!(f, "mix2({mean1}, {sd1}, {mean2}, {sd2}, {logit})")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sem::rng::NoiseStream;

    fn gaussian(mean: Expr, sd: f64) -> Term {
        Term::Noise(NoiseSpec::Gaussian { mean: Box::new(mean), sd })
    }

    #[test]
    fn linear_parts_merge_repeated_variables() {
        let e = Expr::new(vec![
            Term::Scaled(2.0, "A".into()),
            Term::Const(1.5),
            Term::Var("A".into()),
            Term::Scaled(-1.0, "B".into()),
        ]);
        let parts = e.linear_parts().unwrap();
        assert_eq!(parts.constant, 1.5);
        assert_eq!(parts.coeffs, vec![("A".to_string(), 3.0), ("B".to_string(), -1.0)]);
        assert!(parts.noise.is_none());
    }

    #[test]
    fn gaussian_with_linear_mean_is_additive() {
        let e = Expr::new(vec![gaussian(Expr::new(vec![Term::Scaled(0.5, "P".into())]), 2.0)]);
        let parts = e.linear_parts().unwrap();
        assert_eq!(parts.coeffs, vec![("P".to_string(), 0.5)]);
        assert_eq!(parts.noise, Some(NoiseMoments { mean: 0.0, variance: 4.0 }));
    }

    #[test]
    fn bernoulli_moments() {
        let e = Expr::new(vec![Term::Noise(NoiseSpec::BernoulliPm {
            prob: Box::new(Expr::constant(0.75)),
        })]);
        let n = e.linear_parts().unwrap().noise.unwrap();
        assert!((n.mean - 0.5).abs() < 1e-15);
        assert!((n.variance - 0.75).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_of_variable_is_nonlinear() {
        let e = Expr::new(vec![Term::Sigmoid(Box::new(Expr::var("A")))]);
        assert!(matches!(e.linear_parts(), Err(Term::Sigmoid(_))));
        let c = Expr::new(vec![Term::Sigmoid(Box::new(Expr::constant(0.0)))]);
        assert_eq!(c.linear_parts().unwrap().constant, 0.5);
    }

    #[test]
    fn interval_bounds_probabilities() {
        let s = Expr::new(vec![Term::Sigmoid(Box::new(Expr::new(vec![Term::Scaled(2.0, "X".into())])))]);
        let i = s.interval();
        assert_eq!((i.lo, i.hi), (0.0, 1.0));
        let bad = Expr::new(vec![Term::Scaled(0.5, "X".into())]);
        assert!(bad.interval().hi.is_infinite());
    }

    #[test]
    fn display_matches_grammar() {
        let e = Expr::new(vec![
            Term::Scaled(0.5, "A".into()),
            Term::Const(-1.0),
            Term::Noise(NoiseSpec::Mixture {
                mean1: Box::new(Expr::new(vec![Term::Var("A".into()), Term::Const(1.0)])),
                sd1: 1.0,
                mean2: Box::new(Expr::new(vec![Term::Var("A".into()), Term::Const(-1.0)])),
                sd2: 1.0,
                logit: Box::new(Expr::new(vec![Term::Scaled(2.0, "A".into())])),
            }),
        ]);
        assert_eq!(e.to_string(), "0.5*A + -1 + mix2(A + 1, 1, A + -1, 1, 2*A)");
    }

    #[test]
    fn compiled_evaluation_is_deterministic_per_stream() {
        let e = Expr::new(vec![Term::Var("A".into()), gaussian(Expr::constant(0.0), 1.0)]);
        let slots = HashMap::from([("A".to_string(), 0usize)]);
        let c = e.compile(&slots).unwrap();
        let a = c.eval(&[3.0], &mut NoiseStream::new(9, 1, 2));
        let b = c.eval(&[3.0], &mut NoiseStream::new(9, 1, 2));
        let other = c.eval(&[3.0], &mut NoiseStream::new(9, 1, 3));
        assert_eq!(a.to_bits(), b.to_bits());
        assert_ne!(a, other);
    }
}

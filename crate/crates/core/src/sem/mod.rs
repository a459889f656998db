//! Structural equation models: validation, sampling and symbolic expansion.

mod matrix;
mod model;
pub mod rng;
mod sample;
mod symbolic;

use thiserror::Error;

use crate::graph::GraphError;

pub use matrix::{Provenance, SampleMatrix};
pub use model::SEModel;
pub use sample::{do_sample, sample, Intervention};
pub use symbolic::{
    conditional_expectation_fit, interventional_expectation, root_form, InterventionalExpectation,
    RootForm, SymCoef,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SemError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("equation for undeclared node `{0}`")]
    OrphanEquation(String),
    #[error("node `{0}` has more than one equation")]
    DuplicateEquation(String),
    #[error("equation of `{node}` references `{variable}`, which is not a parent")]
    NonParentReference { node: String, variable: String },
    #[error("bad noise parameter in equation of `{node}`: {reason}")]
    BadNoiseParam { node: String, reason: String },
    #[error("node `{0}` has no structural equation")]
    MissingEquation(String),
    #[error("equation of `{node}` is not linear: `{term}`")]
    NonlinearEquation { node: String, term: String },
    #[error("`{proxy}` does not enter `{node}` additively and linearly: `{term}`")]
    NonadditiveProxyInfluence {
        proxy: String,
        node: String,
        term: String,
    },
    #[error("degenerate design: `{0}` takes fewer than two distinct values")]
    DegenerateDesign(String),
    #[error("no column named `{0}`")]
    UnknownColumn(String),
    #[error("{0}")]
    Hypothesis(String),
    #[error("data error: {0}")]
    Data(String),
}

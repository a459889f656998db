//! Causal-graph tooling for auditing and removing discrimination in
//! predictors.
//!
//! The crate is organised around a pipeline:
//!
//! 1. [`dsl`] parses a `.cfm` model file into a graph, structural equations
//!    and a hypothesis class.
//! 2. [`graph`] audits the graph for unresolved and potential proxy
//!    discrimination.
//! 3. [`sem`] samples from the structural equation model (observationally or
//!    under interventions) and expands linear equations symbolically.
//! 4. [`constraint`] derives linear non-discrimination constraints on the
//!    predictor's parameters.
//! 5. [`estimator`] fits constrained and adjusted predictors.
//! 6. [`validator`] checks interventional invariance by Monte Carlo.

pub mod constraint;
pub mod dsl;
pub mod estimator;
pub mod expr;
pub mod graph;
pub mod models;
pub mod sem;
pub mod stats;
pub mod synth;
pub mod validator;

pub use graph::{AuditVerdict, CausalGraph, DirectedPath, GraphError, NodeRole};
pub use sem::{Intervention, SEModel, SampleMatrix};

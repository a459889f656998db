//! The `.cfm` model format.
//!
//! One declaration per line:
//!
//! ```text
//! node NAME role=ROLE
//! edge NAME -> NAME
//! eq NAME = EXPR
//! predictor NAME inputs=(N1, N2) [intercept]
//! ```
//!
//! `EXPR` is a `+`-separated sum of `NUMBER*NAME`, `NUMBER`, `NAME`,
//! `sigmoid(EXPR)`, `normal(EXPR, SD)`, `bern_pm(EXPR)` and
//! `mix2(MEAN1, SD1, MEAN2, SD2, LOGIT)`, where the first mixture component
//! has weight `sigmoid(LOGIT)`. Lines starting with `#` are comments.
//!
//! Parsing never stops at the first problem: every line is parsed and then
//! checked, and all diagnostics are returned together.

mod lexer;
mod parser;

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use crate::constraint::HypothesisClass;
use crate::expr::Expr;
use crate::graph::{CausalGraph, GraphError, NodeRole};
use crate::sem::{SEModel, SemError};

use parser::LineParser;

/// 1-based source position. Specs built in code use line 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decl {
    /// Text after `#`, kept so canonical files round-trip.
    Comment(String),
    Node { name: String, role: NodeRole },
    Edge { from: String, to: String },
    Equation { node: String, expr: Expr },
    Predictor { name: String, inputs: Vec<String>, intercept: bool },
}

impl fmt::Display for Decl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decl::Comment(text) => write!(f, "#{text}"),
            Decl::Node { name, role } => write!(f, "node {name} role={role}"),
            Decl::Edge { from, to } => write!(f, "edge {from} -> {to}"),
            Decl::Equation { node, expr } => write!(f, "eq {node} = {expr}"),
            Decl::Predictor { name, inputs, intercept } => {
                write!(f, "predictor {name} inputs=({})", inputs.join(", "))?;
                if *intercept {
                    f.write_str(" intercept")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiagnosticKind {
    SyntaxError { expected: String },
    UnknownRole,
    UndeclaredVariable,
    DuplicateEquation,
    DuplicateNode,
    DuplicateEdge,
    /// Graph or model validation failure traced back to a declaration.
    Model,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub line: usize,
    pub col: usize,
    #[serde(flatten)]
    pub kind: DiagnosticKind,
    pub message: String,
}

impl Diagnostic {
    pub fn new(line: usize, col: usize, kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic { line, col, kind, message: message.into() }
    }

    fn at(span: Span, kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic::new(span.line, span.col, kind, message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

/// Parsed declarations in source order. Equality compares declarations only,
/// not positions.
#[derive(Debug, Clone, Default)]
pub struct ModelSpec {
    pub decls: Vec<Decl>,
    spans: Vec<Span>,
    /// Name references per declaration.
    refs: Vec<Vec<(String, Span)>>,
}

impl PartialEq for ModelSpec {
    fn eq(&self, other: &Self) -> bool {
        self.decls == other.decls
    }
}

impl ModelSpec {
    /// A spec without source positions.
    pub fn from_decls(decls: Vec<Decl>) -> Self {
        let n = decls.len();
        ModelSpec { decls, spans: vec![Span::default(); n], refs: vec![Vec::new(); n] }
    }

    /// The declarations that reproduce `m`: nodes, edges, equations, then
    /// hypothesis classes.
    pub fn from_model(m: &SEModel) -> Self {
        let g = m.graph();
        let mut decls: Vec<Decl> = (0..g.len())
            .map(|i| Decl::Node { name: g.name(i).to_string(), role: g.role_at(i) })
            .collect();
        decls.extend(g.edges().map(|(a, b)| Decl::Edge { from: a.into(), to: b.into() }));
        decls.extend(m.equations().map(|(n, e)| Decl::Equation { node: n.into(), expr: e.clone() }));
        decls.extend(m.hypotheses().iter().map(|h| Decl::Predictor {
            name: h.predictor.clone(),
            inputs: h.inputs.clone(),
            intercept: h.intercept,
        }));
        ModelSpec::from_decls(decls)
    }

    pub fn span(&self, i: usize) -> Span {
        self.spans.get(i).copied().unwrap_or_default()
    }

    fn node_span(&self, name: &str) -> Option<Span> {
        self.find(|d| matches!(d, Decl::Node { name: n, .. } if n == name))
    }

    fn find(&self, pred: impl Fn(&Decl) -> bool) -> Option<Span> {
        self.decls.iter().position(pred).map(|i| self.span(i))
    }

    fn definition_span(&self, node: &str) -> Option<Span> {
        self.find(|d| match d {
            Decl::Equation { node: n, .. } => n == node,
            Decl::Predictor { name, .. } => name == node,
            _ => false,
        })
    }
}

/// Parses a model file, returning every diagnostic found.
pub fn parse_model(text: &str) -> Result<ModelSpec, Vec<Diagnostic>> {
    let mut spec = ModelSpec::default();
    let mut diags = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim_start();
        if let Some(comment) = trimmed.strip_prefix('#') {
            spec.decls.push(Decl::Comment(comment.trim_end().to_string()));
            spec.spans.push(Span { line, col: raw.chars().count() - trimmed.chars().count() + 1 });
            spec.refs.push(Vec::new());
            continue;
        }
        let body = raw.split('#').next().unwrap_or("");
        if body.trim().is_empty() {
            continue;
        }
        let toks = match lexer::tokenize(body, line) {
            Ok(t) => t,
            Err(d) => {
                diags.push(d);
                continue;
            }
        };
        let start = toks.first().map_or(1, |t| t.col);
        let end_col = body.trim_end().chars().count() + 1;
        let (parsed, line_diags) = LineParser::new(&toks, line, end_col).parse();
        diags.extend(line_diags);
        if let Some(p) = parsed {
            spec.decls.push(p.decl);
            spec.spans.push(Span { line, col: start });
            spec.refs.push(p.names);
        }
    }
    check_names(&spec, &mut diags);
    diags.sort_by_key(|d| (d.line, d.col));
    if diags.is_empty() {
        Ok(spec)
    } else {
        Err(diags)
    }
}

/// Declaration-level checks that need the whole file.
fn check_names(spec: &ModelSpec, diags: &mut Vec<Diagnostic>) {
    let mut declared: HashSet<&str> = HashSet::new();
    for (i, d) in spec.decls.iter().enumerate() {
        if let Decl::Node { name, .. } = d {
            if !declared.insert(name) {
                diags.push(Diagnostic::at(
                    spec.span(i),
                    DiagnosticKind::DuplicateNode,
                    format!("node `{name}` declared twice"),
                ));
            }
        }
    }
    let mut defined: HashSet<&str> = HashSet::new();
    let mut edges: HashSet<(&str, &str)> = HashSet::new();
    for (i, d) in spec.decls.iter().enumerate() {
        if !matches!(d, Decl::Node { .. }) {
            for (name, span) in &spec.refs[i] {
                if !declared.contains(name.as_str()) {
                    diags.push(Diagnostic::at(
                        *span,
                        DiagnosticKind::UndeclaredVariable,
                        format!("`{name}` is not a declared node"),
                    ));
                }
            }
        }
        match d {
            Decl::Equation { node: n, .. } | Decl::Predictor { name: n, .. } => {
                if !defined.insert(n) {
                    diags.push(Diagnostic::at(
                        spec.span(i),
                        DiagnosticKind::DuplicateEquation,
                        format!("`{n}` already has an equation or predictor declaration"),
                    ));
                }
            }
            Decl::Edge { from, to } if !edges.insert((from, to)) => {
                diags.push(Diagnostic::at(
                    spec.span(i),
                    DiagnosticKind::DuplicateEdge,
                    format!("edge {from} -> {to} declared twice"),
                ));
            }
            _ => {}
        }
    }
}

/// Canonical text: one declaration per line in source order, single spaces,
/// trailing newline.
pub fn serialize_model(spec: &ModelSpec) -> String {
    let mut out = String::new();
    for d in &spec.decls {
        out.push_str(&d.to_string());
        out.push('\n');
    }
    out
}

/// Builds the model a spec describes, mapping validation failures back to
/// source positions.
pub fn compile(spec: &ModelSpec, name: &str) -> Result<SEModel, Vec<Diagnostic>> {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut equations = Vec::new();
    let mut hypotheses = Vec::new();
    for d in &spec.decls {
        match d {
            Decl::Comment(_) => {}
            Decl::Node { name, role } => nodes.push((name.clone(), *role)),
            Decl::Edge { from, to } => edges.push((from.clone(), to.clone())),
            Decl::Equation { node, expr } => equations.push((node.clone(), expr.clone())),
            Decl::Predictor { name, inputs, intercept } => hypotheses.push(HypothesisClass {
                predictor: name.clone(),
                inputs: inputs.clone(),
                intercept: *intercept,
            }),
        }
    }
    let graph = CausalGraph::new(nodes, edges).map_err(|e| vec![graph_diag(spec, &e)])?;

    // Reference checks first, so every offending equation is reported.
    let mut diags = Vec::new();
    for (i, d) in spec.decls.iter().enumerate() {
        let Decl::Equation { node, .. } = d else { continue };
        let Ok(parents) = graph.parents(node) else { continue };
        let parents: HashSet<&str> = parents.into_iter().collect();
        for (var, span) in spec.refs[i].iter().skip(1) {
            if !parents.contains(var.as_str()) {
                diags.push(Diagnostic::at(
                    if span.line == 0 { spec.span(i) } else { *span },
                    DiagnosticKind::Model,
                    format!("equation of `{node}` references `{var}`, which is not a parent"),
                ));
            }
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    SEModel::new(name, graph, equations, hypotheses).map_err(|e| vec![sem_diag(spec, &e)])
}

/// Parses and compiles in one step.
pub fn load_model(text: &str, name: &str) -> Result<SEModel, Vec<Diagnostic>> {
    compile(&parse_model(text)?, name)
}

fn fallback(span: Option<Span>) -> Span {
    span.filter(|s| s.line > 0).unwrap_or(Span { line: 1, col: 1 })
}

fn graph_diag(spec: &ModelSpec, e: &GraphError) -> Diagnostic {
    let edge_span = |from: &str, to: &str| {
        spec.find(|d| matches!(d, Decl::Edge { from: f, to: t } if f == from && t == to))
    };
    let span = match e {
        GraphError::CycleDetected(cycle) => cycle
            .windows(2)
            .filter_map(|w| edge_span(&w[0], &w[1]))
            .max_by_key(|s| (s.line, s.col)),
        GraphError::DuplicateNode(n) => {
            let hits: Vec<Span> = spec
                .decls
                .iter()
                .enumerate()
                .filter(|(_, d)| matches!(d, Decl::Node { name, .. } if name == n))
                .map(|(i, _)| spec.span(i))
                .collect();
            hits.get(1).copied()
        }
        GraphError::DuplicateEdge { from, to } | GraphError::UnknownEndpoint { from, to, .. } => edge_span(from, to),
        GraphError::MultipleProtected(names) => names.get(1).and_then(|n| spec.node_span(n)),
        GraphError::PredictorHasChildren(n) => spec.find(|d| matches!(d, Decl::Edge { from, .. } if from == n)),
        GraphError::UnknownNode(n) | GraphError::RoleMismatch { node: n, .. } => spec.node_span(n),
        _ => None,
    };
    Diagnostic::at(fallback(span), DiagnosticKind::Model, e.to_string())
}

fn sem_diag(spec: &ModelSpec, e: &SemError) -> Diagnostic {
    let span = match e {
        SemError::Graph(g) => return graph_diag(spec, g),
        SemError::OrphanEquation(n) | SemError::DuplicateEquation(n) | SemError::MissingEquation(n) => {
            spec.definition_span(n)
        }
        SemError::NonParentReference { node, .. }
        | SemError::BadNoiseParam { node, .. }
        | SemError::NonlinearEquation { node, .. } => spec.definition_span(node),
        SemError::Hypothesis(msg) => {
            let preds: HashMap<&str, usize> = spec
                .decls
                .iter()
                .enumerate()
                .filter_map(|(i, d)| match d {
                    Decl::Predictor { name, .. } => Some((name.as_str(), i)),
                    _ => None,
                })
                .collect();
            preds
                .iter()
                .find(|(n, _)| msg.contains(&format!("`{n}`")))
                .map(|(_, &i)| spec.span(i))
        }
        _ => None,
    };
    Diagnostic::at(fallback(span), DiagnosticKind::Model, e.to_string())
}

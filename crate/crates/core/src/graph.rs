//! Role-labelled causal DAGs.
//!
//! A [`CausalGraph`] is immutable once built. Everything here is a pure
//! function of the graph: directed-path enumeration, blocking, the
//! discrimination audits and graph surgery for interventions.
//!
//! Path enumeration is exhaustive and therefore exponential in the worst
//! case (a DAG on `n` nodes can carry `O(2^n)` paths between two nodes).
//! Graphs here are expert-specified and small, so no pruning is attempted.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("directed cycle: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("node `{0}` declared more than once")]
    DuplicateNode(String),
    #[error("edge {from} -> {to} declared more than once")]
    DuplicateEdge { from: String, to: String },
    #[error("edge {from} -> {to} references undeclared node `{missing}`")]
    UnknownEndpoint {
        from: String,
        to: String,
        missing: String,
    },
    #[error("more than one protected node: {}", .0.join(", "))]
    MultipleProtected(Vec<String>),
    #[error("predictor node `{0}` must be childless")]
    PredictorHasChildren(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("path endpoint `{0}` is in the blocker set")]
    EndpointInBlockerSet(String),
    #[error("graph has no protected node")]
    NoProtected,
    #[error("proxy `{0}` is in the input set; use a proxy constraint instead of unawareness")]
    ProxyInInputSet(String),
    #[error("node `{node}` has role {found}, expected {expected}")]
    RoleMismatch {
        node: String,
        expected: NodeRole,
        found: NodeRole,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Protected,
    Proxy,
    Resolving,
    Feature,
    Outcome,
    Predictor,
    Latent,
}

impl NodeRole {
    pub const ALL: [NodeRole; 7] = [
        NodeRole::Protected,
        NodeRole::Proxy,
        NodeRole::Resolving,
        NodeRole::Feature,
        NodeRole::Outcome,
        NodeRole::Predictor,
        NodeRole::Latent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeRole::Protected => "protected",
            NodeRole::Proxy => "proxy",
            NodeRole::Resolving => "resolving",
            NodeRole::Feature => "feature",
            NodeRole::Outcome => "outcome",
            NodeRole::Predictor => "predictor",
            NodeRole::Latent => "latent",
        }
    }
}

impl fmt::Display for NodeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown role `{s}`"))
    }
}

/// A sequence of at least two distinct nodes joined head-to-tail by edges.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DirectedPath {
    nodes: Vec<String>,
}

impl DirectedPath {
    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn first(&self) -> &str {
        &self.nodes[0]
    }

    pub fn last(&self) -> &str {
        &self.nodes[self.nodes.len() - 1]
    }

    pub fn interior(&self) -> &[String] {
        &self.nodes[1..self.nodes.len() - 1]
    }

    pub fn contains(&self, name: &str) -> bool {
        self.nodes.iter().any(|n| n == name)
    }

    /// True iff some interior node lies in `blockers`. The endpoints may not
    /// be blockers themselves.
    pub fn is_blocked_by<S: AsRef<str>>(&self, blockers: &[S]) -> Result<bool, GraphError> {
        for end in [self.first(), self.last()] {
            if blockers.iter().any(|b| b.as_ref() == end) {
                return Err(GraphError::EndpointInBlockerSet(end.to_string()));
            }
        }
        Ok(self
            .interior()
            .iter()
            .any(|n| blockers.iter().any(|b| b.as_ref() == n)))
    }
}

impl fmt::Display for DirectedPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.nodes.join(" -> "))
    }
}

/// Outcome of a path-based audit. `witnesses` is empty iff `verdict` is false.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditVerdict {
    pub node: String,
    pub verdict: bool,
    pub witnesses: Vec<DirectedPath>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalGraph {
    names: Vec<String>,
    roles: Vec<NodeRole>,
    index: HashMap<String, usize>,
    /// Declaration order.
    edges: Vec<(usize, usize)>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

/// Incremental collector for node and edge declarations.
#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    nodes: Vec<(String, NodeRole)>,
    edges: Vec<(String, String)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(mut self, name: impl Into<String>, role: NodeRole) -> Self {
        self.nodes.push((name.into(), role));
        self
    }

    pub fn edge(mut self, from: impl Into<String>, to: impl Into<String>) -> Self {
        self.edges.push((from.into(), to.into()));
        self
    }

    pub fn build(self) -> Result<CausalGraph, GraphError> {
        CausalGraph::new(self.nodes, self.edges)
    }
}

impl CausalGraph {
    pub fn builder() -> GraphBuilder {
        GraphBuilder::new()
    }

    /// Validates declarations and builds the graph.
    pub fn new<N, E>(nodes: N, edges: E) -> Result<Self, GraphError>
    where
        N: IntoIterator<Item = (String, NodeRole)>,
        E: IntoIterator<Item = (String, String)>,
    {
        let mut names = Vec::new();
        let mut roles = Vec::new();
        let mut index = HashMap::new();
        for (name, role) in nodes {
            if index.contains_key(&name) {
                return Err(GraphError::DuplicateNode(name));
            }
            index.insert(name.clone(), names.len());
            names.push(name);
            roles.push(role);
        }
        let protected: Vec<String> = names
            .iter()
            .zip(&roles)
            .filter(|(_, r)| **r == NodeRole::Protected)
            .map(|(n, _)| n.clone())
            .collect();
        if protected.len() > 1 {
            return Err(GraphError::MultipleProtected(protected));
        }

        let n = names.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut seen = HashSet::new();
        let mut edge_list = Vec::new();
        for (from, to) in edges {
            let lookup = |name: &String| {
                index.get(name).copied().ok_or_else(|| GraphError::UnknownEndpoint {
                    from: from.clone(),
                    to: to.clone(),
                    missing: name.clone(),
                })
            };
            let (u, v) = (lookup(&from)?, lookup(&to)?);
            if u == v {
                return Err(GraphError::CycleDetected(vec![from.clone(), to.clone()]));
            }
            if !seen.insert((u, v)) {
                return Err(GraphError::DuplicateEdge { from, to });
            }
            parents[v].push(u);
            children[u].push(v);
            edge_list.push((u, v));
        }

        for (i, role) in roles.iter().enumerate() {
            if *role == NodeRole::Predictor && !children[i].is_empty() {
                return Err(GraphError::PredictorHasChildren(names[i].clone()));
            }
        }

        let topo = topological_order(&parents, &children)
            .map_err(|stuck| GraphError::CycleDetected(find_cycle(&stuck, &parents, &names)))?;

        Ok(CausalGraph {
            names,
            roles,
            index,
            edges: edge_list,
            parents,
            children,
            topo,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Node names in declaration order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn role_at(&self, idx: usize) -> NodeRole {
        self.roles[idx]
    }

    pub fn index_of(&self, name: &str) -> Result<usize, GraphError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| GraphError::UnknownNode(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn role(&self, name: &str) -> Result<NodeRole, GraphError> {
        Ok(self.roles[self.index_of(name)?])
    }

    /// Edges as name pairs, in declaration order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.edges
            .iter()
            .map(|&(u, v)| (self.names[u].as_str(), self.names[v].as_str()))
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        match (self.index.get(from), self.index.get(to)) {
            (Some(&u), Some(&v)) => self.children[u].contains(&v),
            _ => false,
        }
    }

    pub fn parent_indices(&self, idx: usize) -> &[usize] {
        &self.parents[idx]
    }

    pub fn parents(&self, name: &str) -> Result<Vec<&str>, GraphError> {
        let i = self.index_of(name)?;
        Ok(self.parents[i].iter().map(|&p| self.names[p].as_str()).collect())
    }

    pub fn children(&self, name: &str) -> Result<Vec<&str>, GraphError> {
        let i = self.index_of(name)?;
        Ok(self.children[i].iter().map(|&c| self.names[c].as_str()).collect())
    }

    pub fn is_root(&self, name: &str) -> Result<bool, GraphError> {
        Ok(self.parents[self.index_of(name)?].is_empty())
    }

    /// Node indices in a topological order (ties broken by declaration order).
    pub fn topological_indices(&self) -> &[usize] {
        &self.topo
    }

    pub fn nodes_with_role(&self, role: NodeRole) -> Vec<&str> {
        self.names
            .iter()
            .zip(&self.roles)
            .filter(|(_, r)| **r == role)
            .map(|(n, _)| n.as_str())
            .collect()
    }

    pub fn protected(&self) -> Option<&str> {
        self.nodes_with_role(NodeRole::Protected).into_iter().next()
    }

    fn reach(&self, start: usize, forward: bool, skip: Option<usize>) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            let next = if forward { &self.children[u] } else { &self.parents[u] };
            for &w in next {
                if Some(w) != skip && !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    /// Strict ancestors of `name`, in declaration order.
    pub fn ancestors(&self, name: &str) -> Result<Vec<&str>, GraphError> {
        let i = self.index_of(name)?;
        let seen = self.reach(i, false, None);
        Ok(self.collect_marked(&seen, i))
    }

    /// Strict descendants of `name`, in declaration order.
    pub fn descendants(&self, name: &str) -> Result<Vec<&str>, GraphError> {
        let i = self.index_of(name)?;
        let seen = self.reach(i, true, None);
        Ok(self.collect_marked(&seen, i))
    }

    pub(crate) fn descendant_mask(&self, idx: usize) -> Vec<bool> {
        self.reach(idx, true, None)
    }

    pub(crate) fn ancestor_mask(&self, idx: usize) -> Vec<bool> {
        self.reach(idx, false, None)
    }

    fn collect_marked(&self, seen: &[bool], exclude: usize) -> Vec<&str> {
        (0..self.len())
            .filter(|&j| seen[j] && j != exclude)
            .map(|j| self.names[j].as_str())
            .collect()
    }

    /// Every directed path from `from` to `to`, sorted lexicographically by
    /// node-name sequence. Empty when `from == to`.
    pub fn directed_paths(&self, from: &str, to: &str) -> Result<Vec<DirectedPath>, GraphError> {
        let s = self.index_of(from)?;
        let t = self.index_of(to)?;
        let mut out = Vec::new();
        if s == t {
            return Ok(out);
        }
        // Nodes that can still reach `t`; prunes dead branches without
        // changing the result.
        let useful = self.reach(t, false, None);
        if !useful[s] {
            return Ok(out);
        }
        let mut stack = vec![s];
        self.extend_paths(t, &useful, &mut stack, &mut out);
        out.sort();
        Ok(out)
    }

    fn extend_paths(
        &self,
        target: usize,
        useful: &[bool],
        stack: &mut Vec<usize>,
        out: &mut Vec<DirectedPath>,
    ) {
        let u = *stack.last().expect("non-empty path");
        for &w in &self.children[u] {
            if !useful[w] {
                continue;
            }
            stack.push(w);
            if w == target {
                out.push(DirectedPath {
                    nodes: stack.iter().map(|&i| self.names[i].clone()).collect(),
                });
            } else {
                self.extend_paths(target, useful, stack, out);
            }
            stack.pop();
        }
    }

    fn require_protected(&self) -> Result<&str, GraphError> {
        self.protected().ok_or(GraphError::NoProtected)
    }

    /// Unresolved discrimination in `v`: `v` is not resolving and some
    /// directed path from the protected node to `v` avoids every resolving
    /// node.
    pub fn unresolved_discrimination(&self, v: &str) -> Result<AuditVerdict, GraphError> {
        let a = self.require_protected()?;
        let blockers = self.nodes_with_role(NodeRole::Resolving);
        self.audit(a, v, NodeRole::Resolving, |path| {
            path.is_blocked_by(&blockers).map(|b| !b)
        })
    }

    /// Potential proxy discrimination in `v`: `v` is not a proxy and some
    /// directed path from the protected node to `v` passes through a proxy.
    pub fn potential_proxy_discrimination(&self, v: &str) -> Result<AuditVerdict, GraphError> {
        let a = self.require_protected()?;
        let blockers = self.nodes_with_role(NodeRole::Proxy);
        self.audit(a, v, NodeRole::Proxy, |path| path.is_blocked_by(&blockers))
    }

    fn audit<F>(
        &self,
        a: &str,
        v: &str,
        excluded_role: NodeRole,
        witness: F,
    ) -> Result<AuditVerdict, GraphError>
    where
        F: Fn(&DirectedPath) -> Result<bool, GraphError>,
    {
        let mut witnesses = Vec::new();
        if self.role(v)? != excluded_role {
            for path in self.directed_paths(a, v)? {
                if witness(&path)? {
                    witnesses.push(path);
                }
            }
        }
        Ok(AuditVerdict {
            node: v.to_string(),
            verdict: !witnesses.is_empty(),
            witnesses,
        })
    }

    /// Ancestors of `v` that are roots, plus `v` itself if it is a root.
    pub fn terminal_ancestors(&self, v: &str) -> Result<Vec<&str>, GraphError> {
        let i = self.index_of(v)?;
        let seen = self.reach(i, false, None);
        Ok((0..self.len())
            .filter(|&j| seen[j] && self.parents[j].is_empty())
            .map(|j| self.names[j].as_str())
            .collect())
    }

    /// Graph surgery: drops every edge into each target.
    pub fn intervene<S: AsRef<str>>(&self, targets: &[S]) -> Result<CausalGraph, GraphError> {
        let mut cut = vec![false; self.len()];
        for t in targets {
            cut[self.index_of(t.as_ref())?] = true;
        }
        let nodes = self.names.iter().cloned().zip(self.roles.iter().copied());
        let edges: Vec<(String, String)> = self
            .edges
            .iter()
            .filter(|&&(_, v)| !cut[v])
            .map(|&(u, v)| (self.names[u].clone(), self.names[v].clone()))
            .collect();
        CausalGraph::new(nodes, edges)
    }

    /// True iff no proxy has a directed path into any of `inputs`; a predictor
    /// reading only those inputs then cannot be affected by intervening on a
    /// proxy.
    pub fn unawareness_safe<S: AsRef<str>>(&self, inputs: &[S]) -> Result<bool, GraphError> {
        let mut idx = Vec::new();
        for input in inputs {
            let i = self.index_of(input.as_ref())?;
            if self.roles[i] == NodeRole::Proxy {
                return Err(GraphError::ProxyInInputSet(self.names[i].clone()));
            }
            idx.push(i);
        }
        for (p, role) in self.roles.iter().enumerate() {
            if *role != NodeRole::Proxy {
                continue;
            }
            let reach = self.reach(p, true, None);
            if idx.iter().any(|&i| reach[i]) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Whether every directed path from an ancestor of proxy `p` into feature
    /// `x` passes through `p`, in which case `E[X | do(P)] = E[X | P]`.
    pub fn adjustment_identifiable(&self, p: &str, x: &str) -> Result<bool, GraphError> {
        let pi = self.index_of(p)?;
        let xi = self.index_of(x)?;
        self.expect_role(pi, NodeRole::Proxy)?;
        self.expect_role(xi, NodeRole::Feature)?;
        let ancestors = self.reach(pi, false, None);
        for z in (0..self.len()).filter(|&z| ancestors[z] && z != pi) {
            if self.reach(z, true, Some(pi))[xi] {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn expect_role(&self, idx: usize, expected: NodeRole) -> Result<(), GraphError> {
        if self.roles[idx] != expected {
            return Err(GraphError::RoleMismatch {
                node: self.names[idx].clone(),
                expected,
                found: self.roles[idx],
            });
        }
        Ok(())
    }
}

fn topological_order(parents: &[Vec<usize>], children: &[Vec<usize>]) -> Result<Vec<usize>, Vec<bool>> {
    let n = parents.len();
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(u) = ready.pop_first() {
        order.push(u);
        for &w in &children[u] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                ready.insert(w);
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err(indeg.iter().map(|&d| d > 0).collect())
    }
}

/// Extracts one cycle from the nodes Kahn's algorithm could not place.
/// Every such node has an unplaced parent, so walking parents must repeat.
fn find_cycle(stuck: &[bool], parents: &[Vec<usize>], names: &[String]) -> Vec<String> {
    let mut u = stuck.iter().position(|&s| s).expect("cycle remnant is non-empty");
    let mut pos = HashMap::new();
    let mut walk = Vec::new();
    while !pos.contains_key(&u) {
        pos.insert(u, walk.len());
        walk.push(u);
        u = *parents[u]
            .iter()
            .find(|&&w| stuck[w])
            .expect("unplaced node has an unplaced parent");
    }
    let mut cycle: Vec<String> = walk[pos[&u]..].iter().rev().map(|&i| names[i].clone()).collect();
    cycle.push(cycle[0].clone());
    cycle
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2_right() -> CausalGraph {
        CausalGraph::builder()
            .node("A", NodeRole::Protected)
            .node("Y", NodeRole::Outcome)
            .node("X1", NodeRole::Resolving)
            .node("X2", NodeRole::Feature)
            .node("Rstar", NodeRole::Predictor)
            .edge("A", "Y")
            .edge("Y", "X2")
            .edge("X2", "Rstar")
            .edge("A", "Rstar")
            .edge("A", "X1")
            .edge("X2", "X1")
            .build()
            .unwrap()
    }

    fn path(nodes: &[&str]) -> DirectedPath {
        DirectedPath { nodes: nodes.iter().map(|s| s.to_string()).collect() }
    }

    #[test]
    fn two_cycle_is_rejected() {
        let err = CausalGraph::builder()
            .node("A", NodeRole::Feature)
            .node("B", NodeRole::Feature)
            .edge("A", "B")
            .edge("B", "A")
            .build()
            .unwrap_err();
        assert!(matches!(err, GraphError::CycleDetected(_)));
    }

    #[test]
    fn edgeless_graph_has_no_paths() {
        let g = CausalGraph::new([("A".to_string(), NodeRole::Protected), ("B".to_string(), NodeRole::Feature)], Vec::<(String, String)>::new()).unwrap();
        assert!(g.directed_paths("A", "B").unwrap().is_empty());
        assert!(g.directed_paths("A", "A").unwrap().is_empty());
    }

    #[test]
    fn second_protected_node_is_rejected() {
        let err = CausalGraph::builder()
            .node("A", NodeRole::Protected)
            .node("B", NodeRole::Protected)
            .build()
            .unwrap_err();
        assert_eq!(err, GraphError::MultipleProtected(vec!["A".into(), "B".into()]));
    }

    #[test]
    fn predictor_with_child_is_rejected() {
        let err = CausalGraph::builder()
            .node("R", NodeRole::Predictor)
            .node("Y", NodeRole::Outcome)
            .edge("R", "Y")
            .build()
            .unwrap_err();
        assert_eq!(err, GraphError::PredictorHasChildren("R".into()));
    }

    #[test]
    fn blocking_only_looks_at_interior_nodes() {
        assert!(path(&["A", "X", "R"]).is_blocked_by(&["X"]).unwrap());
        assert!(!path(&["A", "R"]).is_blocked_by(&["X"]).unwrap());
        assert!(!path(&["A", "Y", "X2", "Rstar"]).is_blocked_by(&["X1"]).unwrap());
        assert_eq!(
            path(&["A", "X", "R"]).is_blocked_by(&["R"]),
            Err(GraphError::EndpointInBlockerSet("R".into()))
        );
    }

    #[test]
    fn right_graph_has_two_unblocked_paths() {
        let g = fig2_right();
        let v = g.unresolved_discrimination("Rstar").unwrap();
        assert!(v.verdict);
        let w: Vec<String> = v.witnesses.iter().map(|p| p.to_string()).collect();
        assert_eq!(w, ["A -> Rstar", "A -> Y -> X2 -> Rstar"]);
    }

    #[test]
    fn resolving_node_itself_is_never_flagged() {
        let g = fig2_right();
        assert!(!g.unresolved_discrimination("X1").unwrap().verdict);
    }

    #[test]
    fn proxy_audit_excludes_proxies() {
        let g = CausalGraph::builder()
            .node("A", NodeRole::Protected)
            .node("P", NodeRole::Proxy)
            .node("X", NodeRole::Feature)
            .edge("A", "P")
            .edge("P", "X")
            .edge("A", "X")
            .build()
            .unwrap();
        let v = g.potential_proxy_discrimination("X").unwrap();
        assert!(v.verdict);
        assert_eq!(v.witnesses, vec![path(&["A", "P", "X"])]);
        assert!(!g.potential_proxy_discrimination("P").unwrap().verdict);
    }

    #[test]
    fn terminal_ancestors_of_chain_and_root() {
        let g = CausalGraph::builder()
            .node("A", NodeRole::Protected)
            .node("B", NodeRole::Feature)
            .node("C", NodeRole::Feature)
            .edge("A", "B")
            .edge("B", "C")
            .build()
            .unwrap();
        assert_eq!(g.terminal_ancestors("C").unwrap(), ["A"]);
        assert_eq!(g.terminal_ancestors("A").unwrap(), ["A"]);
        let cut = g.intervene(&["B"]).unwrap();
        assert_eq!(cut.terminal_ancestors("C").unwrap(), ["B"]);
        assert_eq!(g.intervene(&["A"]).unwrap(), g);
    }

    #[test]
    fn role_names_parse() {
        assert_eq!("resolving".parse::<NodeRole>().unwrap(), NodeRole::Resolving);
        assert!("protcted".parse::<NodeRole>().is_err());
    }
}

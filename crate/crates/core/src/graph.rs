//! Directed graphs with string-labeled nodes and edges.
//!
//! A [`LabeledGraph`] is the representation of one input text. Labels are
//! lowercased when they enter the graph, so every graph built through this
//! module satisfies the lowercase invariant regardless of its source.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque node handle, dense within one graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub source: NodeId,
    pub target: NodeId,
    pub label: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("node {0} is not part of the graph")]
    UnknownNode(NodeId),
    #[error("labels must be non-empty")]
    EmptyLabel,
}

#[derive(Clone, Debug, Default)]
pub struct LabeledGraph {
    labels: Vec<String>,
    edges: Vec<Edge>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
}

impl LabeledGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph from node labels (ids are assigned in order) and
    /// `(source, target, label)` triples. Duplicate triples collapse.
    pub fn from_parts<S: AsRef<str>>(
        nodes: &[S],
        edges: &[(u32, u32, &str)],
    ) -> Result<Self, GraphError> {
        let mut g = Self::new();
        for label in nodes {
            g.add_node(label.as_ref())?;
        }
        for &(s, t, label) in edges {
            g.add_edge(NodeId(s), NodeId(t), label)?;
        }
        Ok(g)
    }

    pub fn add_node(&mut self, label: &str) -> Result<NodeId, GraphError> {
        if label.is_empty() {
            return Err(GraphError::EmptyLabel);
        }
        let id = NodeId(self.labels.len() as u32);
        self.labels.push(label.to_lowercase());
        self.out_adj.push(Vec::new());
        self.in_adj.push(Vec::new());
        Ok(id)
    }

    /// Adds an edge; returns `false` when the identical triple already exists.
    pub fn add_edge(&mut self, source: NodeId, target: NodeId, label: &str) -> Result<bool, GraphError> {
        for n in [source, target] {
            if n.index() >= self.labels.len() {
                return Err(GraphError::UnknownNode(n));
            }
        }
        if label.is_empty() {
            return Err(GraphError::EmptyLabel);
        }
        let label = label.to_lowercase();
        if self.has_edge(source, target, &label) {
            return Ok(false);
        }
        let idx = self.edges.len();
        self.edges.push(Edge { source, target, label });
        self.out_adj[source.index()].push(idx);
        self.in_adj[target.index()].push(idx);
        Ok(true)
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.index() < self.labels.len()
    }

    /// Panics if `id` is not a node of this graph.
    pub fn label(&self, id: NodeId) -> &str {
        &self.labels[id.index()]
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.labels.len() as u32).map(NodeId)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &str)> + '_ {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| (NodeId(i as u32), l.as_str()))
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, idx: usize) -> &Edge {
        &self.edges[idx]
    }

    pub fn out_edges(&self, id: NodeId) -> impl Iterator<Item = &Edge> + '_ {
        self.out_adj[id.index()].iter().map(move |&e| &self.edges[e])
    }

    pub fn in_edges(&self, id: NodeId) -> impl Iterator<Item = &Edge> + '_ {
        self.in_adj[id.index()].iter().map(move |&e| &self.edges[e])
    }

    /// Edge indices incident to `id` in either direction (self-loops once).
    pub fn incident_edge_indices(&self, id: NodeId) -> impl Iterator<Item = usize> + '_ {
        let outs = self.out_adj[id.index()].iter().copied();
        let ins = self.in_adj[id.index()]
            .iter()
            .copied()
            .filter(move |&e| self.edges[e].source != id);
        outs.chain(ins)
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.out_adj[id.index()].len() + self.in_adj[id.index()].len()
    }

    pub fn has_edge(&self, source: NodeId, target: NodeId, label: &str) -> bool {
        self.out_adj
            .get(source.index())
            .map(|out| {
                out.iter().any(|&e| {
                    let edge = &self.edges[e];
                    edge.target == target && edge.label == label
                })
            })
            .unwrap_or(false)
    }

    /// Weakly connected components, each sorted by id, in order of their
    /// smallest node.
    pub fn components(&self) -> Vec<Vec<NodeId>> {
        let mut seen = vec![false; self.node_count()];
        let mut out = Vec::new();
        for start in self.node_ids() {
            if seen[start.index()] {
                continue;
            }
            seen[start.index()] = true;
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(n) = queue.pop_front() {
                for e in self.incident_edge_indices(n) {
                    let edge = &self.edges[e];
                    let other = if edge.source == n { edge.target } else { edge.source };
                    if !seen[other.index()] {
                        seen[other.index()] = true;
                        comp.push(other);
                        queue.push_back(other);
                    }
                }
            }
            comp.sort();
            out.push(comp);
        }
        out
    }

    /// True when every node is reachable from every other ignoring direction.
    /// The empty graph counts as connected.
    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// First node without incoming edges, falling back to the first node.
    pub fn default_root(&self) -> Option<NodeId> {
        self.node_ids()
            .find(|&n| self.in_adj[n.index()].is_empty())
            .or_else(|| self.node_ids().next())
    }

    /// Subgraph made of the given edges and their endpoints; nodes are
    /// renumbered in ascending order of their original id.
    pub fn edge_subgraph(&self, edge_indices: &[usize]) -> LabeledGraph {
        let nodes: BTreeSet<NodeId> = edge_indices
            .iter()
            .flat_map(|&e| [self.edges[e].source, self.edges[e].target])
            .collect();
        let nodes: Vec<NodeId> = nodes.into_iter().collect();
        let mut g = LabeledGraph::new();
        for &n in &nodes {
            g.push_normalized_node(self.label(n));
        }
        let pos = |n: NodeId| NodeId(nodes.binary_search(&n).expect("endpoint collected") as u32);
        for &e in edge_indices {
            let edge = &self.edges[e];
            g.push_normalized_edge(pos(edge.source), pos(edge.target), &edge.label);
        }
        g
    }

    /// Single-node graph carrying the label of `id`.
    pub fn node_subgraph(&self, id: NodeId) -> LabeledGraph {
        let mut g = LabeledGraph::new();
        g.push_normalized_node(self.label(id));
        g
    }

    /// Graphviz DOT rendering.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph G {\n");
        for (id, label) in self.nodes() {
            let _ = writeln!(out, "  n{} [label=\"{}\"];", id, dot_escape(label));
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "  n{} -> n{} [label=\"{}\"];",
                e.source,
                e.target,
                dot_escape(&e.label)
            );
        }
        out.push_str("}\n");
        out
    }

    // Labels coming from an existing graph are already normalized.
    fn push_normalized_node(&mut self, label: &str) {
        self.labels.push(label.to_owned());
        self.out_adj.push(Vec::new());
        self.in_adj.push(Vec::new());
    }

    fn push_normalized_edge(&mut self, source: NodeId, target: NodeId, label: &str) {
        if self.has_edge(source, target, label) {
            return;
        }
        let idx = self.edges.len();
        self.edges.push(Edge {
            source,
            target,
            label: label.to_owned(),
        });
        self.out_adj[source.index()].push(idx);
        self.in_adj[target.index()].push(idx);
    }

    fn sorted_edges(&self) -> Vec<&Edge> {
        let mut edges: Vec<&Edge> = self.edges.iter().collect();
        edges.sort();
        edges
    }
}

/// Equality on the (node labels, edge set) pair; insertion order of edges is
/// irrelevant.
impl PartialEq for LabeledGraph {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels && self.sorted_edges() == other.sorted_edges()
    }
}

impl Eq for LabeledGraph {}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_lowercased() {
        let g = LabeledGraph::from_parts(&["Into", "ENTITY2"], &[(0, 1, "ARG")]).unwrap();
        assert_eq!(g.label(NodeId(0)), "into");
        assert_eq!(g.label(NodeId(1)), "entity2");
        assert_eq!(g.edges()[0].label, "arg");
    }

    #[test]
    fn lowercasing_is_idempotent() {
        let g = LabeledGraph::from_parts(&["into", "entity2"], &[(0, 1, "2")]).unwrap();
        let h = LabeledGraph::from_parts(&[g.label(NodeId(0)), g.label(NodeId(1))], &[(0, 1, "2")]).unwrap();
        assert_eq!(g, h);
    }

    #[test]
    fn duplicate_edges_collapse_but_parallel_labels_stay() {
        let mut g = LabeledGraph::from_parts(&["x", "y"], &[]).unwrap();
        assert!(g.add_edge(NodeId(0), NodeId(1), "1").unwrap());
        assert!(!g.add_edge(NodeId(0), NodeId(1), "1").unwrap());
        assert!(g.add_edge(NodeId(0), NodeId(1), "2").unwrap());
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn rejects_dangling_edges_and_empty_labels() {
        let mut g = LabeledGraph::from_parts(&["x"], &[]).unwrap();
        assert_eq!(
            g.add_edge(NodeId(0), NodeId(3), "r"),
            Err(GraphError::UnknownNode(NodeId(3)))
        );
        assert_eq!(g.add_node(""), Err(GraphError::EmptyLabel));
        assert_eq!(g.add_edge(NodeId(0), NodeId(0), ""), Err(GraphError::EmptyLabel));
    }

    #[test]
    fn weak_components_ignore_direction() {
        let g = LabeledGraph::from_parts(&["a", "b", "c", "d"], &[(1, 0, "r"), (2, 1, "s")]).unwrap();
        assert_eq!(
            g.components(),
            vec![vec![NodeId(0), NodeId(1), NodeId(2)], vec![NodeId(3)]]
        );
        assert!(!g.is_connected());
        assert_eq!(g.default_root(), Some(NodeId(2)));
    }

    #[test]
    fn self_loop_counts_once_as_incident() {
        let g = LabeledGraph::from_parts(&["x"], &[(0, 0, "r")]).unwrap();
        assert_eq!(g.incident_edge_indices(NodeId(0)).count(), 1);
    }

    #[test]
    fn edge_subgraph_renumbers() {
        let g = LabeledGraph::from_parts(&["a", "b", "c"], &[(0, 1, "r"), (1, 2, "s")]).unwrap();
        let sub = g.edge_subgraph(&[1]);
        assert_eq!(sub, LabeledGraph::from_parts(&["b", "c"], &[(0, 1, "s")]).unwrap());
    }

    #[test]
    fn dot_output_escapes_quotes() {
        let g = LabeledGraph::from_parts(&["say \"hi\""], &[]).unwrap();
        assert!(g.to_dot().contains(r#"n0 [label="say \"hi\""];"#));
    }
}

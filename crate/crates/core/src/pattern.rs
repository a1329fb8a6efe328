//! Patterns: graphs whose node and edge labels are anchored regexes.

use std::fmt;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::graph::{LabeledGraph, NodeId};
use crate::penman::{self, PenmanError, PenmanView};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PatternError {
    #[error(transparent)]
    Penman(#[from] PenmanError),
    #[error("label {label:?} is not a valid regular expression: {message}")]
    Regex { label: String, message: String },
    #[error("pattern is empty")]
    Empty,
    #[error("pattern is not connected")]
    Disconnected,
    #[error("edge endpoint {0} is not a pattern node")]
    UnknownNode(NodeId),
    #[error("labels must be non-empty")]
    EmptyLabel,
}

const META: &[char] = &[
    '\\', '.', '+', '*', '?', '(', ')', '|', '[', ']', '{', '}', '^', '$', '#', '&', '-', '~',
];

/// A compiled label constraint. Plain text (or text whose metacharacters are
/// all backslash-escaped) is a literal compared by equality; anything else is
/// a regex that must match the whole label.
#[derive(Clone)]
pub struct LabelMatcher {
    source: String,
    literal: Option<String>,
    regex: Option<Regex>,
}

impl LabelMatcher {
    pub fn new(source: &str) -> Result<Self, PatternError> {
        if source.is_empty() {
            return Err(PatternError::EmptyLabel);
        }
        if let Some(literal) = unescape_literal(source) {
            return Ok(Self {
                source: source.to_owned(),
                literal: Some(literal),
                regex: None,
            });
        }
        let regex = Regex::new(&format!("^(?:{source})$")).map_err(|e| PatternError::Regex {
            label: source.to_owned(),
            message: e.to_string(),
        })?;
        Ok(Self {
            source: source.to_owned(),
            literal: None,
            regex: Some(regex),
        })
    }

    /// Matcher accepting exactly `label`.
    pub fn literal(label: &str) -> Self {
        Self {
            source: regex::escape(label),
            literal: Some(label.to_owned()),
            regex: None,
        }
    }

    /// Matcher accepting exactly one of `labels`, written as an alternation.
    pub fn alternation<S: AsRef<str>>(labels: &[S]) -> Result<Self, PatternError> {
        match labels {
            [] => Err(PatternError::EmptyLabel),
            [only] => Ok(Self::literal(only.as_ref())),
            _ => {
                let body: Vec<String> = labels.iter().map(|l| regex::escape(l.as_ref())).collect();
                Self::new(&format!("({})", body.join("|")))
            }
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn is_literal(&self) -> bool {
        self.literal.is_some()
    }

    /// The accepted string, when this is a literal.
    pub fn literal_value(&self) -> Option<&str> {
        self.literal.as_deref()
    }

    #[inline]
    pub fn is_match(&self, label: &str) -> bool {
        match (&self.literal, &self.regex) {
            (Some(lit), _) => lit == label,
            (None, Some(re)) => re.is_match(label),
            (None, None) => unreachable!("matcher is either literal or regex"),
        }
    }
}

impl fmt::Debug for LabelMatcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.source)
    }
}

impl PartialEq for LabelMatcher {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl Eq for LabelMatcher {}

/// `Some(text)` when `source` denotes a single literal string.
fn unescape_literal(source: &str) -> Option<String> {
    let mut out = String::with_capacity(source.len());
    let mut chars = source.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some(e) if META.contains(&e) || e == ' ' => out.push(e),
                _ => return None,
            }
        } else if META.contains(&c) {
            return None;
        } else {
            out.push(c);
        }
    }
    Some(out)
}

/// Lowercases pattern text except for the character following a backslash,
/// so escapes such as `\D` or `\S` keep their meaning.
fn normalize_label(source: &str) -> String {
    let mut out = String::with_capacity(source.len());
    let mut escaped = false;
    for c in source.chars() {
        if escaped {
            out.push(c);
            escaped = false;
        } else {
            if c == '\\' {
                escaped = true;
            }
            out.extend(c.to_lowercase());
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternEdge {
    pub source: NodeId,
    pub target: NodeId,
    pub label: LabelMatcher,
}

/// A connected pattern graph.
#[derive(Clone, Debug)]
pub struct Pattern {
    nodes: Vec<LabelMatcher>,
    edges: Vec<PatternEdge>,
    root: NodeId,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
    plan: Vec<PlanStep>,
}

/// One step of the matching order: which pattern node to bind next, which
/// edge to a previously bound node generates candidates, and which edges must
/// be verified once the node is bound.
#[derive(Clone, Debug)]
pub(crate) struct PlanStep {
    pub node: usize,
    pub anchor: Option<usize>,
    pub checks: Vec<usize>,
}

impl Pattern {
    /// Parses a pattern from PENMAN text. Labels are lowercased outside of
    /// backslash escapes and compiled as anchored regexes.
    pub fn parse(text: &str) -> Result<Self, PatternError> {
        let raw = penman::parse_raw(text)?;
        let nodes: Vec<String> = raw.nodes.iter().map(|l| normalize_label(l)).collect();
        let edges: Vec<(u32, u32, String)> = raw
            .edges
            .iter()
            .map(|(s, t, l)| (*s as u32, *t as u32, normalize_label(l)))
            .collect();
        Self::build(
            nodes
                .iter()
                .map(|l| LabelMatcher::new(l))
                .collect::<Result<_, _>>()?,
            edges
                .into_iter()
                .map(|(s, t, l)| Ok((NodeId(s), NodeId(t), LabelMatcher::new(&l)?)))
                .collect::<Result<_, PatternError>>()?,
            NodeId(0),
        )
    }

    /// Pattern matching exactly the labels of `g` (every label escaped).
    pub fn from_graph(g: &LabeledGraph) -> Result<Self, PatternError> {
        let root = g.default_root().ok_or(PatternError::Empty)?;
        Self::build(
            g.nodes().map(|(_, l)| LabelMatcher::literal(l)).collect(),
            g.edges()
                .iter()
                .map(|e| (e.source, e.target, LabelMatcher::literal(&e.label)))
                .collect(),
            root,
        )
    }

    /// Builds a pattern from label sources. Labels are used as written.
    pub fn new<S: AsRef<str>>(nodes: &[S], edges: &[(u32, u32, &str)]) -> Result<Self, PatternError> {
        let matchers = nodes
            .iter()
            .map(|l| LabelMatcher::new(l.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        let edges = edges
            .iter()
            .map(|&(s, t, l)| Ok((NodeId(s), NodeId(t), LabelMatcher::new(l)?)))
            .collect::<Result<Vec<_>, PatternError>>()?;
        let in_degree_zero = (0..matchers.len() as u32)
            .find(|&n| !edges.iter().any(|(_, t, _)| t.0 == n))
            .unwrap_or(0);
        Self::build(matchers, edges, NodeId(in_degree_zero))
    }

    fn build(
        nodes: Vec<LabelMatcher>,
        edge_list: Vec<(NodeId, NodeId, LabelMatcher)>,
        root: NodeId,
    ) -> Result<Self, PatternError> {
        if nodes.is_empty() {
            return Err(PatternError::Empty);
        }
        let n = nodes.len();
        let mut edges: Vec<PatternEdge> = Vec::with_capacity(edge_list.len());
        for (source, target, label) in edge_list {
            for end in [source, target] {
                if end.index() >= n {
                    return Err(PatternError::UnknownNode(end));
                }
            }
            let edge = PatternEdge { source, target, label };
            if !edges.contains(&edge) {
                edges.push(edge);
            }
        }
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            out_adj[e.source.index()].push(i);
            in_adj[e.target.index()].push(i);
        }
        let mut p = Self {
            nodes,
            edges,
            root,
            out_adj,
            in_adj,
            plan: Vec::new(),
        };
        p.plan = p.make_plan();
        if p.plan.iter().skip(1).any(|s| s.anchor.is_none()) {
            return Err(PatternError::Disconnected);
        }
        Ok(p)
    }

    fn incident(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.out_adj[node]
            .iter()
            .copied()
            .chain(self.in_adj[node].iter().copied())
    }

    fn degree(&self, node: usize) -> usize {
        self.out_adj[node].len() + self.in_adj[node].len()
    }

    // Highest-degree node first, then grow along edges preferring nodes with
    // the most links into the bound set, then higher degree.
    fn make_plan(&self) -> Vec<PlanStep> {
        let n = self.nodes.len();
        let mut placed = vec![false; n];
        let mut plan = Vec::with_capacity(n);
        for _ in 0..n {
            let mut best: Option<(usize, usize, usize)> = None; // (links, degree, node)
            for u in (0..n).filter(|&u| !placed[u]) {
                let links = self
                    .incident(u)
                    .filter(|&e| {
                        let edge = &self.edges[e];
                        let other = if edge.source.index() == u { edge.target } else { edge.source };
                        placed[other.index()] && other.index() != u
                    })
                    .count();
                let key = (links, self.degree(u), u);
                let better = match best {
                    None => true,
                    Some((bl, bd, bu)) => (links, key.1) > (bl, bd) || ((links, key.1) == (bl, bd) && u < bu),
                };
                if better {
                    best = Some(key);
                }
            }
            let (_, _, u) = best.expect("an unplaced node remains");
            let mut anchor = None;
            let mut checks = Vec::new();
            for e in self.incident(u) {
                let edge = &self.edges[e];
                let other = if edge.source.index() == u { edge.target } else { edge.source };
                if other.index() == u {
                    if !checks.contains(&e) {
                        checks.push(e);
                    }
                } else if placed[other.index()] {
                    if anchor.is_none() {
                        anchor = Some(e);
                    }
                    checks.push(e);
                }
            }
            placed[u] = true;
            plan.push(PlanStep {
                node: u,
                anchor,
                checks,
            });
        }
        plan
    }

    pub(crate) fn plan(&self) -> &[PlanStep] {
        &self.plan
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.index() < self.nodes.len()
    }

    /// Panics if `node` is not a pattern node.
    pub fn node_label(&self, node: NodeId) -> &LabelMatcher {
        &self.nodes[node.index()]
    }

    pub fn edges(&self) -> &[PatternEdge] {
        &self.edges
    }

    pub fn is_literal(&self) -> bool {
        self.nodes.iter().all(LabelMatcher::is_literal) && self.edges.iter().all(|e| e.label.is_literal())
    }

    /// Copy of this pattern with one node label replaced; ids are kept.
    pub fn with_node_label(&self, node: NodeId, label: LabelMatcher) -> Result<Self, PatternError> {
        if !self.contains(node) {
            return Err(PatternError::UnknownNode(node));
        }
        let mut p = self.clone();
        p.nodes[node.index()] = label;
        Ok(p)
    }

    /// Deterministic PENMAN text rooted at the pattern's root.
    pub fn to_penman(&self) -> String {
        penman::write_penman(self, self.root.index()).expect("patterns are connected")
    }

    /// Variable (`u_k`) naming `node` in [`Pattern::to_penman`] output.
    pub fn variable_of(&self, node: NodeId) -> Option<String> {
        self.visit_order()
            .iter()
            .position(|&n| n == node.index())
            .map(|k| format!("u_{}", k + 1))
    }

    /// Node named by variable `u_k` in [`Pattern::to_penman`] output.
    pub fn node_of_variable(&self, var: &str) -> Option<NodeId> {
        let k: usize = var.strip_prefix("u_")?.parse().ok()?;
        self.visit_order()
            .get(k.checked_sub(1)?)
            .map(|&n| NodeId(n as u32))
    }

    fn visit_order(&self) -> Vec<usize> {
        penman::visit_order(self, self.root.index())
    }
}

impl PenmanView for Pattern {
    fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn node_text(&self, node: usize) -> &str {
        self.nodes[node].source()
    }

    fn edge_list(&self) -> Vec<(usize, usize, &str)> {
        self.edges
            .iter()
            .map(|e| (e.source.index(), e.target.index(), e.label.source()))
            .collect()
    }
}

/// Patterns are equal when they serialize to the same PENMAN text, so node
/// numbering and edge insertion order do not matter.
impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        self.nodes.len() == other.nodes.len()
            && self.edges.len() == other.edges.len()
            && self.to_penman() == other.to_penman()
    }
}

impl Eq for Pattern {}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_penman())
    }
}

impl std::str::FromStr for Pattern {
    type Err = PatternError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for Pattern {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_penman())
    }
}

impl<'de> Deserialize<'de> for Pattern {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Pattern::parse(&text).map_err(serde::de::Error::custom)
    }
}

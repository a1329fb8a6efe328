//! Subgraph monomorphism search for patterns.
//!
//! A mapping is an injective assignment of pattern nodes to graph nodes such
//! that every node regex matches its image's label and every pattern edge has
//! a same-direction graph edge whose label its regex matches. Extra graph
//! edges between matched nodes are allowed.
//!
//! The search is VF2-style backtracking over a precomputed node order (see
//! [`Pattern`]): each pattern node after the first is reached through an
//! edge to an already bound node, so candidates come from the neighborhood
//! of that node's image rather than from the whole graph.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::graph::{LabeledGraph, NodeId};
use crate::pattern::Pattern;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct MatchMapping {
    /// Pattern node to graph node.
    pub assignment: BTreeMap<NodeId, NodeId>,
}

impl MatchMapping {
    pub fn get(&self, pattern_node: NodeId) -> Option<NodeId> {
        self.assignment.get(&pattern_node).copied()
    }
}

/// True iff at least one mapping of `p` into `g` exists.
pub fn matches(p: &Pattern, g: &LabeledGraph) -> bool {
    let mut found = false;
    search(p, g, &mut |_| {
        found = true;
        false
    });
    found
}

/// Distinct mappings of `p` into `g`, at most `limit` of them.
pub fn find_mappings(p: &Pattern, g: &LabeledGraph, limit: Option<usize>) -> Vec<MatchMapping> {
    let mut out = Vec::new();
    if limit == Some(0) {
        return out;
    }
    search(p, g, &mut |assign| {
        out.push(MatchMapping {
            assignment: assign
                .iter()
                .enumerate()
                .map(|(u, m)| (NodeId(u as u32), m.expect("complete assignment")))
                .collect(),
        });
        limit.is_none_or(|l| out.len() < l)
    });
    out
}

/// Runs `visit` on every complete assignment until it returns `false`.
fn search(p: &Pattern, g: &LabeledGraph, visit: &mut dyn FnMut(&[Option<NodeId>]) -> bool) {
    if p.node_count() > g.node_count() {
        return;
    }
    let mut state = State {
        p,
        g,
        assign: vec![None; p.node_count()],
        used: vec![false; g.node_count()],
    };
    state.extend(0, visit);
}

struct State<'a> {
    p: &'a Pattern,
    g: &'a LabeledGraph,
    assign: Vec<Option<NodeId>>,
    used: Vec<bool>,
}

impl State<'_> {
    /// Returns `false` once the visitor asked to stop.
    fn extend(&mut self, depth: usize, visit: &mut dyn FnMut(&[Option<NodeId>]) -> bool) -> bool {
        let plan = self.p.plan();
        if depth == plan.len() {
            return visit(&self.assign);
        }
        let step = &plan[depth];
        for cand in self.candidates(depth) {
            if self.used[cand.index()] || !self.feasible(step.node, cand, &step.checks) {
                continue;
            }
            self.assign[step.node] = Some(cand);
            self.used[cand.index()] = true;
            let go_on = self.extend(depth + 1, visit);
            self.used[cand.index()] = false;
            self.assign[step.node] = None;
            if !go_on {
                return false;
            }
        }
        true
    }

    fn candidates(&self, depth: usize) -> Vec<NodeId> {
        let step = &self.p.plan()[depth];
        let Some(anchor) = step.anchor else {
            return self.g.node_ids().collect();
        };
        let edge = &self.p.edges()[anchor];
        let mut out: Vec<NodeId> = if edge.target.index() == step.node {
            let from = self.assign[edge.source.index()].expect("anchor source is bound");
            self.g
                .out_edges(from)
                .filter(|e| edge.label.is_match(&e.label))
                .map(|e| e.target)
                .collect()
        } else {
            let to = self.assign[edge.target.index()].expect("anchor target is bound");
            self.g
                .in_edges(to)
                .filter(|e| edge.label.is_match(&e.label))
                .map(|e| e.source)
                .collect()
        };
        out.sort_unstable();
        out.dedup();
        out
    }

    fn feasible(&self, u: usize, cand: NodeId, checks: &[usize]) -> bool {
        if !self.p.node_label(NodeId(u as u32)).is_match(self.g.label(cand)) {
            return false;
        }
        let image = |n: NodeId| -> NodeId {
            if n.index() == u {
                cand
            } else {
                self.assign[n.index()].expect("checked edges join bound nodes")
            }
        };
        checks.iter().all(|&e| {
            let edge = &self.p.edges()[e];
            let (s, t) = (image(edge.source), image(edge.target));
            self.g
                .out_edges(s)
                .any(|ge| ge.target == t && edge.label.is_match(&ge.label))
        })
    }
}

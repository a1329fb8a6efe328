//! Brute-force reference implementations and random fixtures.
//!
//! Everything here is deliberately naive: oracles enumerate assignments,
//! permutations or subsets directly and share no code with the algorithms
//! they check beyond label matching and graph storage.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::features::FeatureTable;
use crate::graph::{LabeledGraph, NodeId};
use crate::learn::gini_impurity;
use crate::matcher::MatchMapping;
use crate::pattern::Pattern;
use crate::rules::{Clause, Rule, RuleSystem};

/// Every injective map from pattern nodes to graph nodes, in lexicographic
/// order of the assigned graph nodes.
fn injections(k: usize, n: usize, visit: &mut dyn FnMut(&[usize])) {
    fn rec(k: usize, n: usize, cur: &mut Vec<usize>, used: &mut Vec<bool>, visit: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            visit(cur);
            return;
        }
        for v in 0..n {
            if !used[v] {
                used[v] = true;
                cur.push(v);
                rec(k, n, cur, used, visit);
                cur.pop();
                used[v] = false;
            }
        }
    }
    rec(k, n, &mut Vec::new(), &mut vec![false; n], visit);
}

fn is_mapping(p: &Pattern, g: &LabeledGraph, assign: &[usize]) -> bool {
    p.node_ids()
        .all(|u| p.node_label(u).is_match(g.label(NodeId(assign[u.index()] as u32))))
        && p.edges().iter().all(|e| {
            let s = NodeId(assign[e.source.index()] as u32);
            let t = NodeId(assign[e.target.index()] as u32);
            g.edges()
                .iter()
                .any(|ge| ge.source == s && ge.target == t && e.label.is_match(&ge.label))
        })
}

pub fn brute_force_mappings(p: &Pattern, g: &LabeledGraph) -> BTreeSet<MatchMapping> {
    let mut out = BTreeSet::new();
    injections(p.node_count(), g.node_count(), &mut |assign| {
        if is_mapping(p, g, assign) {
            out.insert(MatchMapping {
                assignment: assign
                    .iter()
                    .enumerate()
                    .map(|(u, &v)| (NodeId(u as u32), NodeId(v as u32)))
                    .collect(),
            });
        }
    });
    out
}

pub fn brute_force_matches(p: &Pattern, g: &LabeledGraph) -> bool {
    !brute_force_mappings(p, g).is_empty()
}

/// Label- and edge-preserving bijection test over all permutations.
pub fn isomorphic(a: &LabeledGraph, b: &LabeledGraph) -> bool {
    if a.node_count() != b.node_count() || a.edge_count() != b.edge_count() {
        return false;
    }
    let edges_b: BTreeSet<(u32, u32, &str)> = b
        .edges()
        .iter()
        .map(|e| (e.source.0, e.target.0, e.label.as_str()))
        .collect();
    let mut found = false;
    injections(a.node_count(), b.node_count(), &mut |perm| {
        if found {
            return;
        }
        let labels_ok = a.node_ids().all(|u| a.label(u) == b.label(NodeId(perm[u.index()] as u32)));
        found = labels_ok
            && a.edges().iter().all(|e| {
                edges_b.contains(&(perm[e.source.index()] as u32, perm[e.target.index()] as u32, e.label.as_str()))
            });
    });
    found
}

/// Edge subsets of size 1..=max_edges whose edges form a weakly connected
/// graph, by checking every subset.
pub fn connected_edge_subsets(g: &LabeledGraph, max_edges: usize) -> Vec<BTreeSet<usize>> {
    let m = g.edge_count();
    assert!(m <= 20, "subset enumeration is exponential");
    let mut out = Vec::new();
    for mask in 1u32..(1 << m) {
        let size = mask.count_ones() as usize;
        if size > max_edges {
            continue;
        }
        let set: BTreeSet<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if edges_connected(g, &set) {
            out.push(set);
        }
    }
    out
}

fn edges_connected(g: &LabeledGraph, set: &BTreeSet<usize>) -> bool {
    let mut reached: BTreeSet<usize> = BTreeSet::new();
    let mut nodes: BTreeSet<NodeId> = BTreeSet::new();
    let first = *set.iter().next().expect("non-empty");
    reached.insert(first);
    nodes.insert(g.edge(first).source);
    nodes.insert(g.edge(first).target);
    loop {
        let before = reached.len();
        for &i in set {
            let e = g.edge(i);
            if !reached.contains(&i) && (nodes.contains(&e.source) || nodes.contains(&e.target)) {
                reached.insert(i);
                nodes.insert(e.source);
                nodes.insert(e.target);
            }
        }
        if reached.len() == before {
            return reached.len() == set.len();
        }
    }
}

/// Single-node subgraphs followed by connected edge subsets, all as graphs.
pub fn brute_force_subgraphs(g: &LabeledGraph, max_edges: usize) -> Vec<LabeledGraph> {
    let mut out: Vec<LabeledGraph> = g.node_ids().map(|n| g.node_subgraph(n)).collect();
    for set in connected_edge_subsets(g, max_edges) {
        out.push(g.edge_subgraph(&set.into_iter().collect::<Vec<_>>()));
    }
    out
}

/// Isomorphism classes of `graphs`, one representative each, in first-seen
/// order.
pub fn dedup_isomorphic(graphs: impl IntoIterator<Item = LabeledGraph>) -> Vec<LabeledGraph> {
    let mut reps: Vec<LabeledGraph> = Vec::new();
    for g in graphs {
        if !reps.iter().any(|r| isomorphic(r, &g)) {
            reps.push(g);
        }
    }
    reps
}

/// DNF evaluation with the brute-force matcher.
pub fn oracle_predict(rs: &RuleSystem, g: &LabeledGraph) -> BTreeSet<String> {
    rs.classes()
        .filter(|c| {
            rs.rules(c).iter().any(|r| {
                r.clauses()
                    .iter()
                    .all(|cl| brute_force_matches(&cl.pattern, g) != cl.negated)
            })
        })
        .map(str::to_owned)
        .collect()
}

/// Best split over `rows` by trying every feature on dense presence rows:
/// `(feature index, impurity decrease)`, ties to the lowest index, `None`
/// when nothing strictly decreases impurity.
pub fn exhaustive_best_split(table: &FeatureTable, gold: &[bool], rows: &[usize]) -> Option<(usize, f64)> {
    let n = rows.len();
    let pos = rows.iter().filter(|&&r| gold[r]).count();
    let parent = gini_impurity(pos, n);
    let dense: Vec<Vec<bool>> = rows.iter().map(|&r| table.presence_row(r)).collect();
    let mut best: Option<(usize, f64)> = None;
    for f in 0..table.feature_count() {
        let (mut n1, mut p1) = (0, 0);
        for (present, &r) in dense.iter().zip(rows) {
            if present[f] {
                n1 += 1;
                p1 += gold[r] as usize;
            }
        }
        let (n0, p0) = (n - n1, pos - p1);
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let child = (n0 as f64 * gini_impurity(p0, n0) + n1 as f64 * gini_impurity(p1, n1)) / n as f64;
        let decrease = parent - child;
        if decrease > 1e-12 && best.is_none_or(|(_, d)| decrease > d + 1e-12) {
            best = Some((f, decrease));
        }
    }
    best
}

pub const NODE_ALPHABET: &[&str] = &["a", "b", "c"];
pub const EDGE_ALPHABET: &[&str] = &["r", "s"];

/// Graph with 1..=max_nodes nodes and up to max_edges random edges
/// (duplicates collapse, self-loops allowed).
pub fn random_graph<R: Rng>(rng: &mut R, max_nodes: usize, max_edges: usize) -> LabeledGraph {
    let n = rng.gen_range(1..=max_nodes);
    let mut g = LabeledGraph::new();
    for _ in 0..n {
        g.add_node(NODE_ALPHABET.choose(rng).unwrap()).unwrap();
    }
    for _ in 0..rng.gen_range(0..=max_edges) {
        let s = NodeId(rng.gen_range(0..n) as u32);
        let t = NodeId(rng.gen_range(0..n) as u32);
        g.add_edge(s, t, EDGE_ALPHABET.choose(rng).unwrap()).unwrap();
    }
    g
}

/// Weakly connected graph: a random spanning tree with random edge
/// directions plus extra edges, which create cycles and reentrancies.
pub fn random_connected_graph<R: Rng>(rng: &mut R, max_nodes: usize, extra_edges: usize) -> LabeledGraph {
    let n = rng.gen_range(1..=max_nodes);
    let mut g = LabeledGraph::new();
    for _ in 0..n {
        g.add_node(NODE_ALPHABET.choose(rng).unwrap()).unwrap();
    }
    for v in 1..n {
        let u = rng.gen_range(0..v);
        let (s, t) = if rng.gen_bool(0.5) { (u, v) } else { (v, u) };
        g.add_edge(NodeId(s as u32), NodeId(t as u32), EDGE_ALPHABET.choose(rng).unwrap())
            .unwrap();
    }
    for _ in 0..rng.gen_range(0..=extra_edges) {
        let s = NodeId(rng.gen_range(0..n) as u32);
        let t = NodeId(rng.gen_range(0..n) as u32);
        g.add_edge(s, t, EDGE_ALPHABET.choose(rng).unwrap()).unwrap();
    }
    g
}

/// A literal, `.*`, or a two-way alternation over `alphabet`.
pub fn random_label_source<R: Rng>(rng: &mut R, alphabet: &[&str]) -> String {
    match rng.gen_range(0..4) {
        0 => ".*".to_owned(),
        1 => {
            let mut pair: Vec<&str> = alphabet.choose_multiple(rng, 2).copied().collect();
            pair.sort_unstable();
            format!("({})", pair.join("|"))
        }
        _ => (*alphabet.choose(rng).unwrap()).to_owned(),
    }
}

/// Connected pattern with 0..=max_edges edges, grown as a tree with
/// occasional edges back into existing nodes.
pub fn random_pattern<R: Rng>(rng: &mut R, max_edges: usize) -> Pattern {
    let m = rng.gen_range(0..=max_edges);
    let mut nodes = vec![random_label_source(rng, NODE_ALPHABET)];
    let mut edges: Vec<(u32, u32, String)> = Vec::new();
    for _ in 0..m {
        let label = random_label_source(rng, EDGE_ALPHABET);
        let u = rng.gen_range(0..nodes.len()) as u32;
        if nodes.len() > 1 && rng.gen_bool(0.25) {
            let v = rng.gen_range(0..nodes.len()) as u32;
            edges.push((u, v, label));
        } else {
            nodes.push(random_label_source(rng, NODE_ALPHABET));
            let v = (nodes.len() - 1) as u32;
            if rng.gen_bool(0.5) {
                edges.push((u, v, label));
            } else {
                edges.push((v, u, label));
            }
        }
    }
    edges.sort();
    edges.dedup();
    let edge_refs: Vec<(u32, u32, &str)> = edges.iter().map(|(s, t, l)| (*s, *t, l.as_str())).collect();
    Pattern::new(&nodes, &edge_refs).expect("generated patterns are connected")
}

/// Up to `max_classes` classes, each with 1..=max_rules rules of
/// 1..=max_clauses clauses; the first clause of every rule is positive.
pub fn random_rule_system<R: Rng>(
    rng: &mut R,
    max_classes: usize,
    max_rules: usize,
    max_clauses: usize,
) -> RuleSystem {
    let mut rs = RuleSystem::new();
    for c in 0..rng.gen_range(0..=max_classes) {
        for _ in 0..rng.gen_range(1..=max_rules) {
            let mut clauses = vec![Clause::positive(random_pattern(rng, 2))];
            for _ in 1..rng.gen_range(1..=max_clauses) {
                let p = random_pattern(rng, 2);
                clauses.push(if rng.gen_bool(0.5) {
                    Clause::negated(p)
                } else {
                    Clause::positive(p)
                });
            }
            rs.add_rule(Rule::new(format!("class{c}"), clauses).expect("first clause is positive"));
        }
    }
    rs
}

pub const SYNTH_CLASS: &str = "entity-destination";
pub const GOOD_VERBS: &[&str] = &["drop", "dump", "pour", "put", "throw", "pack", "load", "insert"];
/// Verbs that occur in positives and negatives equally often.
pub const MIXED_VERBS: &[&str] = &["move", "send"];
pub const BAD_VERBS: &[&str] = &["divide", "split", "translate", "turn"];
const SUBJECTS: &[&str] = &["we", "he", "she", "they"];
const NOUNS: &[&str] = &["piece", "part", "group", "lobe"];

/// Feature present in exactly the positives of [`synthetic_corpus`].
pub const PLANTED_EDGE: &str = "(u_1 / into :2 (u_2 / entity2))";
/// The refinable variant: the verb slot is a regex.
pub const REGEX_VARIANT: &str = "(u_1 / into :1 (u_2 / .*))";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntheticRow {
    pub text: String,
    pub penman: String,
    pub labels: BTreeSet<String>,
}

/// Corpus with one class. Positives read "S V the entity1 into the
/// entity2" and are the only rows with an `into -2-> entity2` edge.
/// Negatives reuse `into`, `entity1` and `entity2` in other
/// configurations. Verbs under `into :1` are GOOD verbs and MIXED verbs in
/// positives, MIXED and BAD verbs in negatives.
pub fn synthetic_corpus<R: Rng>(rng: &mut R, n: usize) -> Vec<SyntheticRow> {
    (0..n)
        .map(|_| {
            let subj = *SUBJECTS.choose(rng).unwrap();
            if rng.gen_bool(0.35) {
                let verb = if rng.gen_bool(0.1) {
                    *MIXED_VERBS.choose(rng).unwrap()
                } else {
                    *GOOD_VERBS.choose(rng).unwrap()
                };
                SyntheticRow {
                    text: format!("{subj} {verb} the entity1 into the entity2"),
                    penman: format!(
                        "(i / into :1 (v / {verb} :1 (s / {subj}) :2 (a / entity1)) :2 (b / entity2))"
                    ),
                    labels: BTreeSet::from([SYNTH_CLASS.to_owned()]),
                }
            } else {
                let noun = *NOUNS.choose(rng).unwrap();
                let (text, penman) = match rng.gen_range(0..3) {
                    0 => {
                        let verb = if rng.gen_bool(0.15) {
                            *MIXED_VERBS.choose(rng).unwrap()
                        } else {
                            *BAD_VERBS.choose(rng).unwrap()
                        };
                        (
                            format!("{subj} {verb} the entity1 into {noun}s near the entity2"),
                            format!(
                                "(i / into :1 (v / {verb} :1 (s / {subj}) :2 (a / entity1)) :2 (n / {noun} :near (b / entity2)))"
                            ),
                        )
                    }
                    1 => (
                        format!("the entity2 goes into a {noun}"),
                        format!("(i / into :1 (b / entity2) :2 (n / {noun}))"),
                    ),
                    _ => {
                        let verb = *GOOD_VERBS.choose(rng).unwrap();
                        (
                            format!("{subj} {verb} the entity1 from the entity2"),
                            format!("(v / {verb} :1 (s / {subj}) :2 (a / entity1) :from (b / entity2))"),
                        )
                    }
                };
                SyntheticRow {
                    text,
                    penman,
                    labels: BTreeSet::new(),
                }
            }
        })
        .collect()
}

/// The corpus as JSONL dataset text.
pub fn to_jsonl(rows: &[SyntheticRow]) -> String {
    rows.iter()
        .map(|r| {
            serde_json::json!({"text": r.text, "penman": r.penman, "labels": r.labels}).to_string() + "\n"
        })
        .collect()
}

//! Connected-subgraph features.
//!
//! Every graph contributes its single nodes plus every connected set of
//! 1..=n edges (connectivity ignores direction; a subgraph's nodes are the
//! endpoints of its edges). Features are deduplicated across the dataset by
//! an exact canonical form, and presence in a row is decided by the pattern
//! matcher, so feature statistics agree with rule evaluation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::LabeledGraph;
use crate::matcher;
use crate::pattern::Pattern;

pub const DEFAULT_MAX_EDGES: usize = 2;
pub const DEFAULT_SIZE_GUARD: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureId(pub usize);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeatureError {
    #[error("graph with {nodes} nodes and {edges} edges exceeds the feature size bound of {bound} edges")]
    TooLarge { nodes: usize, edges: usize, bound: usize },
}

/// Edge-index sets of every connected subgraph with 1..=`max_edges` edges.
/// Each set is sorted ascending; no set is produced twice.
pub fn enumerate_edge_sets(g: &LabeledGraph, max_edges: usize) -> Vec<Vec<usize>> {
    let m = g.edge_count();
    if max_edges == 0 || m == 0 {
        return Vec::new();
    }
    // line graph: edges sharing an endpoint are adjacent
    let line_adj: Vec<Vec<usize>> = (0..m)
        .map(|i| {
            let e = g.edge(i);
            let mut nb: Vec<usize> = g
                .incident_edge_indices(e.source)
                .chain(g.incident_edge_indices(e.target))
                .filter(|&j| j != i)
                .collect();
            nb.sort_unstable();
            nb.dedup();
            nb
        })
        .collect();

    let mut out = Vec::new();
    for v in 0..m {
        let ext: Vec<usize> = line_adj[v].iter().copied().filter(|&u| u > v).collect();
        let mut sub = vec![v];
        extend_edge_set(&line_adj, v, &mut sub, ext, max_edges, &mut out);
    }
    out
}

fn extend_edge_set(
    adj: &[Vec<usize>],
    start: usize,
    sub: &mut Vec<usize>,
    mut ext: Vec<usize>,
    max: usize,
    out: &mut Vec<Vec<usize>>,
) {
    let mut sorted = sub.clone();
    sorted.sort_unstable();
    out.push(sorted);
    if sub.len() == max {
        return;
    }
    while let Some(w) = ext.pop() {
        let mut next_ext = ext.clone();
        for &u in &adj[w] {
            if u <= start || sub.contains(&u) || next_ext.contains(&u) {
                continue;
            }
            // exclusive neighborhood: not adjacent to the current subgraph
            if sub.iter().any(|&s| adj[s].binary_search(&u).is_ok()) {
                continue;
            }
            next_ext.push(u);
        }
        sub.push(w);
        extend_edge_set(adj, start, sub, next_ext, max, out);
        sub.pop();
    }
}

/// Single-node subgraphs followed by connected subgraphs of 1..=`max_edges`
/// edges, nodes renumbered per subgraph.
pub fn enumerate_subgraphs(g: &LabeledGraph, max_edges: usize) -> Vec<LabeledGraph> {
    let mut out: Vec<LabeledGraph> = g.node_ids().map(|n| g.node_subgraph(n)).collect();
    out.extend(
        enumerate_edge_sets(g, max_edges)
            .iter()
            .map(|set| g.edge_subgraph(set)),
    );
    out
}

/// Canonical string of a small graph: equal for two graphs iff they are
/// isomorphic with identical labels.
///
/// Nodes are sorted by label; among all orderings consistent with that sort
/// the one with the lexicographically least edge list is chosen.
pub fn canonical_form(g: &LabeledGraph, size_guard: usize) -> Result<String, FeatureError> {
    if g.edge_count() > size_guard || g.node_count() > size_guard + 1 {
        return Err(FeatureError::TooLarge {
            nodes: g.node_count(),
            edges: g.edge_count(),
            bound: size_guard,
        });
    }
    let mut by_label: Vec<(&str, usize)> = g.nodes().map(|(id, l)| (l, id.index())).collect();
    by_label.sort();
    let labels: Vec<&str> = by_label.iter().map(|(l, _)| *l).collect();

    let mut best: Option<Vec<(usize, usize, &str)>> = None;
    let mut order: Vec<usize> = Vec::with_capacity(labels.len());
    let mut used = vec![false; g.node_count()];
    search_orderings(g, &by_label, &mut order, &mut used, &mut best);

    let edges = best.unwrap_or_default();
    Ok(serde_json::to_string(&(labels, edges)).expect("plain data serializes"))
}

fn search_orderings<'g>(
    g: &'g LabeledGraph,
    by_label: &[(&str, usize)],
    order: &mut Vec<usize>,
    used: &mut [bool],
    best: &mut Option<Vec<(usize, usize, &'g str)>>,
) {
    let k = order.len();
    if k == by_label.len() {
        let mut pos = vec![0usize; g.node_count()];
        for (p, &n) in order.iter().enumerate() {
            pos[n] = p;
        }
        let mut edges: Vec<(usize, usize, &str)> = g
            .edges()
            .iter()
            .map(|e| (pos[e.source.index()], pos[e.target.index()], e.label.as_str()))
            .collect();
        edges.sort();
        if best.as_ref().is_none_or(|b| edges < *b) {
            *best = Some(edges);
        }
        return;
    }
    let label = by_label[k].0;
    for &(l, n) in by_label {
        if l != label || used[n] {
            continue;
        }
        used[n] = true;
        order.push(n);
        search_orderings(g, by_label, order, used, best);
        order.pop();
        used[n] = false;
    }
}

#[derive(Clone, Debug, Default)]
pub struct FeatureCatalog {
    features: Vec<LabeledGraph>,
    patterns: Vec<Pattern>,
    keys: HashMap<String, FeatureId>,
}

impl FeatureCatalog {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn graph(&self, id: FeatureId) -> &LabeledGraph {
        &self.features[id.0]
    }

    /// The feature as a literal pattern.
    pub fn pattern(&self, id: FeatureId) -> &Pattern {
        &self.patterns[id.0]
    }

    pub fn lookup(&self, canonical: &str) -> Option<FeatureId> {
        self.keys.get(canonical).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = FeatureId> {
        (0..self.features.len()).map(FeatureId)
    }

    fn insert(&mut self, key: String, graph: LabeledGraph) -> FeatureId {
        if let Some(&id) = self.keys.get(&key) {
            return id;
        }
        let id = FeatureId(self.features.len());
        self.patterns
            .push(Pattern::from_graph(&graph).expect("features are non-empty and connected"));
        self.features.push(graph);
        self.keys.insert(key, id);
        id
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub max_edges: usize,
    pub size_guard: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            max_edges: DEFAULT_MAX_EDGES,
            size_guard: DEFAULT_SIZE_GUARD,
        }
    }
}

/// Sparse boolean presence matrix over dataset rows × catalog features.
#[derive(Clone, Debug)]
pub struct FeatureTable {
    pub catalog: FeatureCatalog,
    pub row_ids: Vec<u64>,
    /// For each feature, sorted indices of the rows containing it.
    feature_rows: Vec<Vec<usize>>,
    /// For each row, sorted features it contains.
    row_features: Vec<Vec<FeatureId>>,
}

impl FeatureTable {
    pub fn row_count(&self) -> usize {
        self.row_ids.len()
    }

    pub fn feature_count(&self) -> usize {
        self.catalog.len()
    }

    pub fn is_present(&self, row: usize, feature: FeatureId) -> bool {
        self.row_features[row].binary_search(&feature).is_ok()
    }

    pub fn rows_with(&self, feature: FeatureId) -> &[usize] {
        &self.feature_rows[feature.0]
    }

    pub fn features_of(&self, row: usize) -> &[FeatureId] {
        &self.row_features[row]
    }

    /// Dense presence row, mostly for tests and small exports.
    pub fn presence_row(&self, row: usize) -> Vec<bool> {
        let mut out = vec![false; self.feature_count()];
        for f in &self.row_features[row] {
            out[f.0] = true;
        }
        out
    }

    /// Catalog with per-class true/false positive counts, given each row's
    /// label set.
    pub fn export(&self, labels: &[BTreeSet<String>]) -> Vec<FeatureExport> {
        let classes: BTreeSet<&String> = labels.iter().flatten().collect();
        self.catalog
            .ids()
            .map(|f| {
                let rows = self.rows_with(f);
                let counts = classes
                    .iter()
                    .map(|&c| {
                        let tp = rows.iter().filter(|&&r| labels[r].contains(c)).count();
                        (c.clone(), ClassCounts { tp, fp: rows.len() - tp })
                    })
                    .collect();
                FeatureExport {
                    penman: self.catalog.pattern(f).to_penman(),
                    counts,
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureExport {
    pub penman: String,
    pub counts: BTreeMap<String, ClassCounts>,
}

/// Extracts features from every row, deduplicates them and computes the
/// presence of each feature in each row.
pub fn build_feature_table(
    rows: &[(u64, &LabeledGraph)],
    config: FeatureConfig,
) -> Result<FeatureTable, FeatureError> {
    if config.max_edges > config.size_guard {
        return Err(FeatureError::TooLarge {
            nodes: config.max_edges + 1,
            edges: config.max_edges,
            bound: config.size_guard,
        });
    }

    let extracted: Vec<Vec<(String, LabeledGraph)>> = rows
        .par_iter()
        .map(|(_, g)| -> Result<_, FeatureError> {
            let mut seen = BTreeSet::new();
            let mut out = Vec::new();
            for sub in enumerate_subgraphs(g, config.max_edges) {
                let key = canonical_form(&sub, config.size_guard)?;
                if seen.insert(key.clone()) {
                    out.push((key, sub));
                }
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;

    let mut catalog = FeatureCatalog::default();
    let mut own: Vec<Vec<FeatureId>> = Vec::with_capacity(rows.len());
    for row in extracted {
        let mut ids: Vec<FeatureId> = row
            .into_iter()
            .map(|(key, graph)| catalog.insert(key, graph))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        own.push(ids);
    }

    // rows containing each node label, for candidate pruning
    let mut label_rows: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, (_, g)) in rows.iter().enumerate() {
        let labels: BTreeSet<&str> = g.nodes().map(|(_, l)| l).collect();
        for l in labels {
            label_rows.entry(l).or_default().push(i);
        }
    }

    let feature_rows: Vec<Vec<usize>> = catalog
        .ids()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|f| {
            let graph = catalog.graph(f);
            let pattern = catalog.pattern(f);
            let candidates = graph
                .nodes()
                .map(|(_, l)| label_rows.get(l).map(Vec::as_slice).unwrap_or(&[]))
                .min_by_key(|rows| rows.len())
                .unwrap_or(&[]);
            candidates
                .iter()
                .copied()
                .filter(|&r| own[r].binary_search(&f).is_ok() || matcher::matches(pattern, rows[r].1))
                .collect()
        })
        .collect();

    let mut row_features: Vec<Vec<FeatureId>> = vec![Vec::new(); rows.len()];
    for (f, rs) in feature_rows.iter().enumerate() {
        for &r in rs {
            row_features[r].push(FeatureId(f));
        }
    }

    Ok(FeatureTable {
        catalog,
        row_ids: rows.iter().map(|(id, _)| *id).collect(),
        feature_rows,
        row_features,
    })
}

//! Rule suggestion by ranking features for one class.
//!
//! Two rankings are available: impurity-decrease importance from a CART
//! tree trained on the boolean feature table, and the model-free `tp - fp`
//! count. Ties in either ranking go to the lower feature id.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureId, FeatureTable};
use crate::pattern::Pattern;
use crate::rules::scores;

pub const DEFAULT_MAX_DEPTH: usize = 5;

/// Impurity decreases at or below this are treated as no improvement.
const MIN_DECREASE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LearnError {
    #[error("gold vector has {gold} entries but the table has {rows} rows")]
    LengthMismatch { gold: usize, rows: usize },
    #[error("gold labels are constant; a tree needs positive and negative rows")]
    DegenerateLabels,
    #[error("no positive examples for the class")]
    NoPositiveExamples,
    #[error("max_depth must be at least 1")]
    ZeroDepth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMethod {
    Gini,
    #[serde(alias = "tpfp")]
    TpFp,
}

impl std::str::FromStr for RankMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gini" => Ok(Self::Gini),
            "tp_fp" | "tpfp" => Ok(Self::TpFp),
            other => Err(format!("unknown ranking method {other:?} (expected gini or tpfp)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// Split feature; `None` for leaves.
    pub feature: Option<FeatureId>,
    pub gini: f64,
    pub samples: usize,
    /// `[negative, positive]`
    pub class_counts: [usize; 2],
    /// Child holding rows without the feature.
    pub absent: Option<usize>,
    /// Child holding rows with the feature.
    pub present: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Node 0 is the root.
    pub nodes: Vec<TreeNode>,
    pub importances: Vec<f64>,
}

impl DecisionTree {
    pub fn split_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.feature.is_some()).count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, n: usize) -> usize {
            let node = &t.nodes[n];
            match (node.absent, node.present) {
                (Some(a), Some(p)) => 1 + go(t, a).max(go(t, p)),
                _ => 0,
            }
        }
        go(self, 0)
    }
}

pub fn gini_impurity(positives: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = positives as f64 / total as f64;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

/// The chosen split at one node: feature and impurity decrease.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Split {
    pub feature: FeatureId,
    pub decrease: f64,
}

/// Best split of `rows` over all features, or `None` when no split lowers
/// the Gini impurity.
pub fn best_split(table: &FeatureTable, gold: &[bool], rows: &[usize]) -> Option<Split> {
    let n = rows.len();
    let positives = rows.iter().filter(|&&r| gold[r]).count();
    let parent = gini_impurity(positives, n);

    // per feature: (rows present, positives present)
    let mut counts: BTreeMap<FeatureId, (usize, usize)> = BTreeMap::new();
    for &r in rows {
        for &f in table.features_of(r) {
            let c = counts.entry(f).or_default();
            c.0 += 1;
            if gold[r] {
                c.1 += 1;
            }
        }
    }

    let mut best: Option<Split> = None;
    for (&feature, &(present, pos_present)) in &counts {
        if present == n {
            continue;
        }
        let absent = n - present;
        let weighted = (present as f64 / n as f64) * gini_impurity(pos_present, present)
            + (absent as f64 / n as f64) * gini_impurity(positives - pos_present, absent);
        let decrease = parent - weighted;
        if decrease <= MIN_DECREASE {
            continue;
        }
        if best.is_none_or(|b| decrease > b.decrease + MIN_DECREASE) {
            best = Some(Split { feature, decrease });
        }
    }
    best
}

/// Greedy CART training with the Gini criterion.
pub fn train_tree(table: &FeatureTable, gold: &[bool], max_depth: usize) -> Result<DecisionTree, LearnError> {
    check_alignment(table, gold)?;
    if max_depth == 0 {
        return Err(LearnError::ZeroDepth);
    }
    let positives = gold.iter().filter(|&&g| g).count();
    if positives == 0 || positives == gold.len() {
        return Err(LearnError::DegenerateLabels);
    }

    let total = gold.len();
    let mut tree = DecisionTree {
        nodes: Vec::new(),
        importances: vec![0.0; table.feature_count()],
    };
    let all: Vec<usize> = (0..total).collect();
    grow(table, gold, all, 0, max_depth, total, &mut tree);

    let sum: f64 = tree.importances.iter().sum();
    if sum > 0.0 {
        for v in &mut tree.importances {
            *v /= sum;
        }
    }
    Ok(tree)
}

fn grow(
    table: &FeatureTable,
    gold: &[bool],
    rows: Vec<usize>,
    depth: usize,
    max_depth: usize,
    total: usize,
    tree: &mut DecisionTree,
) -> usize {
    let positives = rows.iter().filter(|&&r| gold[r]).count();
    let id = tree.nodes.len();
    tree.nodes.push(TreeNode {
        feature: None,
        gini: gini_impurity(positives, rows.len()),
        samples: rows.len(),
        class_counts: [rows.len() - positives, positives],
        absent: None,
        present: None,
    });
    if depth >= max_depth || positives == 0 || positives == rows.len() {
        return id;
    }
    let Some(split) = best_split(table, gold, &rows) else {
        return id;
    };
    tree.importances[split.feature.0] += rows.len() as f64 / total as f64 * split.decrease;

    let (with, without): (Vec<usize>, Vec<usize>) =
        rows.into_iter().partition(|&r| table.is_present(r, split.feature));
    let absent = grow(table, gold, without, depth + 1, max_depth, total, tree);
    let present = grow(table, gold, with, depth + 1, max_depth, total, tree);
    let node = &mut tree.nodes[id];
    node.feature = Some(split.feature);
    node.absent = Some(absent);
    node.present = Some(present);
    id
}

fn check_alignment(table: &FeatureTable, gold: &[bool]) -> Result<(), LearnError> {
    if gold.len() != table.row_count() {
        return Err(LearnError::LengthMismatch {
            gold: gold.len(),
            rows: table.row_count(),
        });
    }
    Ok(())
}

/// `(tp, fp)`: positive and negative rows containing the feature.
pub fn feature_counts(table: &FeatureTable, gold: &[bool], feature: FeatureId) -> (usize, usize) {
    let rows = table.rows_with(feature);
    let tp = rows.iter().filter(|&&r| gold[r]).count();
    (tp, rows.len() - tp)
}

/// All features ordered by descending score, ties by ascending id.
pub fn rank_features(
    table: &FeatureTable,
    gold: &[bool],
    method: RankMethod,
    max_depth: usize,
) -> Result<Vec<(FeatureId, f64)>, LearnError> {
    check_alignment(table, gold)?;
    let mut ranked: Vec<(FeatureId, f64)> = match method {
        RankMethod::Gini => {
            let tree = train_tree(table, gold, max_depth)?;
            tree.importances
                .into_iter()
                .enumerate()
                .map(|(i, v)| (FeatureId(i), v))
                .collect()
        }
        RankMethod::TpFp => table
            .catalog
            .ids()
            .map(|f| {
                let (tp, fp) = feature_counts(table, gold, f);
                (f, tp as f64 - fp as f64)
            })
            .collect(),
    };
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    #[serde(rename = "penman")]
    pub pattern: Pattern,
    pub feature: FeatureId,
    pub tp: usize,
    pub fp: usize,
    pub precision: f64,
    pub recall: f64,
    pub score: f64,
    pub method: RankMethod,
}

/// Top-`k` features as single-pattern suggestions with their statistics on
/// the rows of `table`.
pub fn suggest(
    table: &FeatureTable,
    gold: &[bool],
    k: usize,
    method: RankMethod,
    max_depth: usize,
) -> Result<Vec<Suggestion>, LearnError> {
    check_alignment(table, gold)?;
    let positives = gold.iter().filter(|&&g| g).count();
    if positives == 0 {
        return Err(LearnError::NoPositiveExamples);
    }
    let ranked = rank_features(table, gold, method, max_depth)?;
    Ok(ranked
        .into_iter()
        .take(k)
        .map(|(feature, score)| {
            let (tp, fp) = feature_counts(table, gold, feature);
            let (precision, recall, _) = scores(tp, fp, positives - tp);
            Suggestion {
                pattern: table.catalog.pattern(feature).clone(),
                feature,
                tp,
                fp,
                precision,
                recall,
                score,
                method,
            }
        })
        .collect())
}

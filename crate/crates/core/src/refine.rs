//! Refinement of regex-labeled pattern nodes.
//!
//! Every graph label the regex node binds to on the training rows is tried
//! as a literal in its place. Labels whose substituted pattern is precise
//! enough (strictly above the threshold, with non-zero recall) are kept, and
//! the node label becomes their alternation.
//!
//! A substituted pattern matches a row exactly when some mapping of the
//! original pattern binds the node to a graph node carrying that label, so
//! all candidates are scored from one enumeration of mappings per row.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::NodeId;
use crate::matcher;
use crate::pattern::{LabelMatcher, Pattern, PatternError};
use crate::rules::{scores, EvalRow, Rule};

pub const DEFAULT_THRESHOLD: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RefineError {
    #[error("rule has no clause {0}")]
    UnknownClause(usize),
    #[error("clause {0} is negated; only positive clauses can be refined")]
    NegatedClause(usize),
    #[error("pattern has no node {0}")]
    UnknownNode(String),
    #[error("node {0} has a literal label; only regex labels can be refined")]
    NodeNotRegex(String),
    #[error("the training split is empty")]
    EmptySplit,
    #[error("no positive training examples for the class")]
    NoPositiveExamples,
    #[error("the pattern does not match any training row")]
    NoCandidates,
    #[error("no candidate label exceeds the precision threshold")]
    NoneAccepted,
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub label: String,
    pub tp: usize,
    pub fp: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementResult {
    #[serde(rename = "refined_penman")]
    pub refined_pattern: Pattern,
    pub node: NodeId,
    pub threshold: f64,
    /// Sorted by label.
    pub accepted_labels: Vec<LabelStats>,
    /// Sorted by label.
    pub rejected_labels: Vec<LabelStats>,
    /// Statistics of the refined pattern as a one-clause rule.
    pub refined: LabelStats,
}

/// Refines `node` of clause `clause_index` of `rule` against `rows`, scoring
/// one-vs-rest for `class`. The rule itself is left unchanged.
pub fn refine(
    rule: &Rule,
    clause_index: usize,
    node: NodeId,
    rows: &[EvalRow<'_>],
    class: &str,
    threshold: f64,
) -> Result<RefinementResult, RefineError> {
    let clause = rule
        .clauses()
        .get(clause_index)
        .ok_or(RefineError::UnknownClause(clause_index))?;
    if clause.negated {
        return Err(RefineError::NegatedClause(clause_index));
    }
    refine_pattern(&clause.pattern, node, rows, class, threshold)
}

pub fn refine_pattern(
    pattern: &Pattern,
    node: NodeId,
    rows: &[EvalRow<'_>],
    class: &str,
    threshold: f64,
) -> Result<RefinementResult, RefineError> {
    if !pattern.contains(node) {
        return Err(RefineError::UnknownNode(node.to_string()));
    }
    if pattern.node_label(node).is_literal() {
        return Err(RefineError::NodeNotRegex(
            pattern.variable_of(node).unwrap_or_else(|| node.to_string()),
        ));
    }
    if rows.is_empty() {
        return Err(RefineError::EmptySplit);
    }
    let positives = rows.iter().filter(|r| r.labels.contains(class)).count();
    if positives == 0 {
        return Err(RefineError::NoPositiveExamples);
    }

    // labels bound to `node` in each row
    let bound: Vec<BTreeSet<&str>> = rows
        .par_iter()
        .map(|row| {
            matcher::find_mappings(pattern, row.graph, None)
                .iter()
                .map(|m| row.graph.label(m.get(node).expect("mapping is total")))
                .collect()
        })
        .collect();
    let candidates: BTreeSet<&str> = bound.iter().flatten().copied().collect();
    if candidates.is_empty() {
        return Err(RefineError::NoCandidates);
    }

    let stats_for = |accept: &dyn Fn(&BTreeSet<&str>) -> bool, label: String| {
        let mut tp = 0;
        let mut fp = 0;
        for (row, b) in rows.iter().zip(&bound) {
            if accept(b) {
                if row.labels.contains(class) {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let (precision, recall, _) = scores(tp, fp, positives - tp);
        LabelStats {
            label,
            tp,
            fp,
            precision,
            recall,
        }
    };

    let (accepted, rejected): (Vec<LabelStats>, Vec<LabelStats>) = candidates
        .iter()
        .map(|&l| stats_for(&|b: &BTreeSet<&str>| b.contains(l), l.to_owned()))
        .partition(|s| s.precision > threshold && s.recall > 0.0);
    if accepted.is_empty() {
        return Err(RefineError::NoneAccepted);
    }

    let labels: Vec<&str> = accepted.iter().map(|s| s.label.as_str()).collect();
    let refined_pattern = pattern.with_node_label(node, LabelMatcher::alternation(&labels)?)?;
    let accepted_set: BTreeSet<&str> = labels.iter().copied().collect();
    let refined = stats_for(
        &|b: &BTreeSet<&str>| !b.is_disjoint(&accepted_set),
        refined_pattern.node_label(node).source().to_owned(),
    );

    Ok(RefinementResult {
        refined_pattern,
        node,
        threshold,
        accepted_labels: accepted,
        rejected_labels: rejected,
        refined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LabeledGraph;
    use crate::penman::parse_penman;
    use crate::rules::Clause;
    use std::collections::BTreeSet;

    struct Corpus {
        graphs: Vec<LabeledGraph>,
        labels: Vec<BTreeSet<String>>,
    }

    impl Corpus {
        fn rows(&self) -> Vec<EvalRow<'_>> {
            self.graphs
                .iter()
                .zip(&self.labels)
                .enumerate()
                .map(|(i, (graph, labels))| EvalRow {
                    id: i as u64,
                    graph,
                    labels,
                })
                .collect()
        }
    }

    fn corpus(items: &[(&str, bool)]) -> Corpus {
        Corpus {
            graphs: items.iter().map(|(p, _)| parse_penman(p).unwrap()).collect(),
            labels: items
                .iter()
                .map(|(_, pos)| {
                    if *pos {
                        BTreeSet::from(["ed".to_owned()])
                    } else {
                        BTreeSet::new()
                    }
                })
                .collect(),
        }
    }

    fn verb(v: &str) -> String {
        format!("(i / into :1 (v / {v} :2 (a / entity1)) :2 (b / entity2))")
    }

    #[test]
    fn keeps_only_precise_labels() {
        let c = corpus(&[
            (&verb("x"), true),
            (&verb("x"), true),
            (&verb("y"), true),
            (&verb("y"), false),
            ("(z / other)", false),
        ]);
        let rule = Rule::single("ed", Pattern::parse(&verb(".*")).unwrap());
        let node = rule.clauses()[0].pattern.node_of_variable("u_2").unwrap();
        let result = refine(&rule, 0, node, &c.rows(), "ed", 0.9).unwrap();
        let accepted: Vec<&str> = result.accepted_labels.iter().map(|s| s.label.as_str()).collect();
        assert_eq!(accepted, vec!["x"]);
        assert_eq!(result.accepted_labels[0].precision, 1.0);
        assert_eq!(result.rejected_labels[0].label, "y");
        assert_eq!(result.rejected_labels[0].precision, 0.5);
        assert_eq!(
            result.refined_pattern.to_penman(),
            "(u_1 / into :1 (u_2 / x :2 (u_3 / entity1)) :2 (u_4 / entity2))"
        );
        assert_eq!((result.refined.tp, result.refined.fp), (2, 0));
    }

    #[test]
    fn alternation_is_sorted() {
        let c = corpus(&[(&verb("pour"), true), (&verb("drop"), true), (&verb("add"), true)]);
        let rule = Rule::single("ed", Pattern::parse(&verb(".*")).unwrap());
        let node = rule.clauses()[0].pattern.node_of_variable("u_2").unwrap();
        let result = refine(&rule, 0, node, &c.rows(), "ed", 0.9).unwrap();
        assert_eq!(result.refined_pattern.node_label(node).source(), "(add|drop|pour)");
        assert_eq!(result.refined.tp, 3);
    }

    #[test]
    fn threshold_is_strict() {
        // 9 of 10 = 0.9 exactly, so not accepted at 0.9
        let mut items: Vec<(String, bool)> = (0..9).map(|_| (verb("x"), true)).collect();
        items.push((verb("x"), false));
        let refs: Vec<(&str, bool)> = items.iter().map(|(s, b)| (s.as_str(), *b)).collect();
        let c = corpus(&refs);
        let rule = Rule::single("ed", Pattern::parse(&verb(".*")).unwrap());
        let node = rule.clauses()[0].pattern.node_of_variable("u_2").unwrap();
        assert_eq!(refine(&rule, 0, node, &c.rows(), "ed", 0.9), Err(RefineError::NoneAccepted));
        assert!(refine(&rule, 0, node, &c.rows(), "ed", 0.89).is_ok());
    }

    #[test]
    fn error_paths() {
        let c = corpus(&[(&verb("x"), true), ("(z / other)", false)]);
        let literal = Rule::single("ed", Pattern::parse(&verb("x")).unwrap());
        assert!(matches!(
            refine(&literal, 0, NodeId(1), &c.rows(), "ed", 0.9),
            Err(RefineError::NodeNotRegex(_))
        ));
        let unmatched = Rule::single("ed", Pattern::parse("(u / .* :9 (v / nothing))").unwrap());
        assert_eq!(
            refine(&unmatched, 0, NodeId(0), &c.rows(), "ed", 0.9),
            Err(RefineError::NoCandidates)
        );
        assert_eq!(
            refine(&unmatched, 2, NodeId(0), &c.rows(), "ed", 0.9),
            Err(RefineError::UnknownClause(2))
        );
        assert!(matches!(
            refine(&unmatched, 0, NodeId(7), &c.rows(), "ed", 0.9),
            Err(RefineError::UnknownNode(_))
        ));
        assert_eq!(
            refine(&unmatched, 0, NodeId(0), &[], "ed", 0.9),
            Err(RefineError::EmptySplit)
        );
        assert_eq!(
            refine(&unmatched, 0, NodeId(0), &c.rows(), "missing", 0.9),
            Err(RefineError::NoPositiveExamples)
        );
        let negated = Rule::new(
            "ed",
            vec![
                Clause::positive(Pattern::parse("(u / into)").unwrap()),
                Clause::negated(Pattern::parse("(u / .*)").unwrap()),
            ],
        )
        .unwrap();
        assert_eq!(
            refine(&negated, 1, NodeId(0), &c.rows(), "ed", 0.9),
            Err(RefineError::NegatedClause(1))
        );
    }
}

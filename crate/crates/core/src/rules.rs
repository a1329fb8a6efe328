//! Rule systems: for each class, a disjunction of rules, each rule a
//! conjunction of possibly negated patterns.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::LabeledGraph;
use crate::matcher;
use crate::pattern::{Pattern, PatternError};

pub const RULES_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("a rule needs at least one clause")]
    NoClauses,
    #[error("a rule needs at least one non-negated clause")]
    OnlyNegations,
    #[error("class {class:?}, rule {rule}, clause {clause}: {source}")]
    Pattern {
        class: String,
        rule: usize,
        clause: usize,
        source: PatternError,
    },
    #[error("class {class:?}, rule {rule}: {message}")]
    InvalidRule { class: String, rule: usize, message: String },
    #[error("invalid rule file: {0}")]
    Json(String),
    #[error("unsupported rule file schema version {0}")]
    SchemaVersion(u32),
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("class {class:?} has no rule {index}")]
    UnknownRule { class: String, index: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clause {
    #[serde(rename = "penman")]
    pub pattern: Pattern,
    #[serde(default)]
    pub negated: bool,
}

impl Clause {
    pub fn positive(pattern: Pattern) -> Self {
        Self {
            pattern,
            negated: false,
        }
    }

    pub fn negated(pattern: Pattern) -> Self {
        Self {
            pattern,
            negated: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    clauses: Vec<Clause>,
    class_label: String,
}

impl Rule {
    pub fn new(class_label: impl Into<String>, clauses: Vec<Clause>) -> Result<Self, RuleError> {
        if clauses.is_empty() {
            return Err(RuleError::NoClauses);
        }
        if clauses.iter().all(|c| c.negated) {
            return Err(RuleError::OnlyNegations);
        }
        Ok(Self {
            clauses,
            class_label: class_label.into(),
        })
    }

    /// One-clause rule.
    pub fn single(class_label: impl Into<String>, pattern: Pattern) -> Self {
        Self {
            clauses: vec![Clause::positive(pattern)],
            class_label: class_label.into(),
        }
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn class_label(&self) -> &str {
        &self.class_label
    }

    pub fn fires(&self, g: &LabeledGraph) -> bool {
        rule_fires(self, g)
    }
}

/// Every positive clause matches and no negated clause does. Positive
/// clauses are checked first.
pub fn rule_fires(rule: &Rule, g: &LabeledGraph) -> bool {
    rule.clauses
        .iter()
        .filter(|c| !c.negated)
        .all(|c| matcher::matches(&c.pattern, g))
        && rule
            .clauses
            .iter()
            .filter(|c| c.negated)
            .all(|c| !matcher::matches(&c.pattern, g))
}

/// Position of a rule inside a [`RuleSystem`].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RuleRef {
    pub class: String,
    pub index: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RuleSystem {
    rules_by_class: BTreeMap<String, Vec<Rule>>,
}

impl RuleSystem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.rules_by_class.is_empty()
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.rules_by_class.keys().map(String::as_str)
    }

    pub fn rules(&self, class: &str) -> &[Rule] {
        self.rules_by_class.get(class).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn rule(&self, class: &str, index: usize) -> Result<&Rule, RuleError> {
        self.rules_by_class
            .get(class)
            .ok_or_else(|| RuleError::UnknownClass(class.to_owned()))?
            .get(index)
            .ok_or_else(|| RuleError::UnknownRule {
                class: class.to_owned(),
                index,
            })
    }

    /// Appends the rule to its class; returns its index.
    pub fn add_rule(&mut self, rule: Rule) -> usize {
        let list = self.rules_by_class.entry(rule.class_label.clone()).or_default();
        list.push(rule);
        list.len() - 1
    }

    pub fn remove_rule(&mut self, class: &str, index: usize) -> Result<Rule, RuleError> {
        let list = self
            .rules_by_class
            .get_mut(class)
            .ok_or_else(|| RuleError::UnknownClass(class.to_owned()))?;
        if index >= list.len() {
            return Err(RuleError::UnknownRule {
                class: class.to_owned(),
                index,
            });
        }
        let removed = list.remove(index);
        if list.is_empty() {
            self.rules_by_class.remove(class);
        }
        Ok(removed)
    }

    pub fn replace_rule(&mut self, class: &str, index: usize, rule: Rule) -> Result<Rule, RuleError> {
        if rule.class_label != class {
            return Err(RuleError::InvalidRule {
                class: class.to_owned(),
                rule: index,
                message: format!("rule belongs to class {:?}", rule.class_label),
            });
        }
        let slot = self
            .rules_by_class
            .get_mut(class)
            .and_then(|l| l.get_mut(index))
            .ok_or_else(|| RuleError::UnknownRule {
                class: class.to_owned(),
                index,
            })?;
        Ok(std::mem::replace(slot, rule))
    }

    /// Classes with at least one firing rule.
    pub fn predict(&self, g: &LabeledGraph) -> BTreeSet<String> {
        self.rules_by_class
            .iter()
            .filter(|(_, rules)| rules.iter().any(|r| r.fires(g)))
            .map(|(c, _)| c.clone())
            .collect()
    }

    /// Every rule that fires on `g`.
    pub fn firing_rules(&self, g: &LabeledGraph) -> Vec<RuleRef> {
        self.rules_by_class
            .iter()
            .flat_map(|(c, rules)| {
                rules.iter().enumerate().filter(|(_, r)| r.fires(g)).map(|(i, _)| RuleRef {
                    class: c.clone(),
                    index: i,
                })
            })
            .collect()
    }

    pub fn to_file(&self) -> RuleFile {
        RuleFile {
            schema_version: Some(RULES_SCHEMA_VERSION),
            classes: self
                .rules_by_class
                .iter()
                .map(|(c, rules)| {
                    (
                        c.clone(),
                        rules
                            .iter()
                            .map(|r| RuleEntry {
                                clauses: r
                                    .clauses
                                    .iter()
                                    .map(|cl| ClauseEntry {
                                        penman: cl.pattern.to_penman(),
                                        negated: cl.negated,
                                    })
                                    .collect(),
                            })
                            .collect(),
                    )
                })
                .collect(),
        }
    }

    pub fn from_file(file: &RuleFile) -> Result<Self, RuleError> {
        if let Some(v) = file.schema_version {
            if v != RULES_SCHEMA_VERSION {
                return Err(RuleError::SchemaVersion(v));
            }
        }
        let mut rs = RuleSystem::new();
        for (class, entries) in &file.classes {
            for (ri, entry) in entries.iter().enumerate() {
                let clauses = entry
                    .clauses
                    .iter()
                    .enumerate()
                    .map(|(ci, c)| {
                        Pattern::parse(&c.penman)
                            .map(|pattern| Clause {
                                pattern,
                                negated: c.negated,
                            })
                            .map_err(|source| RuleError::Pattern {
                                class: class.clone(),
                                rule: ri,
                                clause: ci,
                                source,
                            })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let rule = Rule::new(class.clone(), clauses).map_err(|e| RuleError::InvalidRule {
                    class: class.clone(),
                    rule: ri,
                    message: e.to_string(),
                })?;
                rs.add_rule(rule);
            }
        }
        Ok(rs)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("rule file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, RuleError> {
        let file: RuleFile = serde_json::from_str(text).map_err(|e| RuleError::Json(e.to_string()))?;
        Self::from_file(&file)
    }
}

/// On-disk / wire form of a rule system.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    #[serde(default)]
    pub classes: BTreeMap<String, Vec<RuleEntry>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleEntry {
    pub clauses: Vec<ClauseEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClauseEntry {
    pub penman: String,
    #[serde(default)]
    pub negated: bool,
}

impl RuleEntry {
    pub fn into_rule(&self, class: &str) -> Result<Rule, RuleError> {
        let file = RuleFile {
            schema_version: None,
            classes: BTreeMap::from([(class.to_owned(), vec![self.clone()])]),
        };
        let mut rs = RuleSystem::from_file(&file)?;
        Ok(rs.remove_rule(class, 0).expect("one rule was added"))
    }
}

/// Confusion counts and derived scores for one binary decision.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: Vec<u64>,
    pub false_positives: Vec<u64>,
    pub false_negatives: Vec<u64>,
}

impl Metrics {
    pub fn record(&mut self, id: u64, gold: bool, predicted: bool) {
        match (gold, predicted) {
            (true, true) => {
                self.tp += 1;
                self.true_positives.push(id);
            }
            (false, true) => {
                self.fp += 1;
                self.false_positives.push(id);
            }
            (true, false) => {
                self.fn_ += 1;
                self.false_negatives.push(id);
            }
            (false, false) => self.tn += 1,
        }
    }

    /// Recomputes precision, recall and F1 from the counts. Zero
    /// denominators give zero.
    pub fn finish(&mut self) {
        (self.precision, self.recall, self.f1) = scores(self.tp, self.fp, self.fn_);
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// `(precision, recall, f1)` with the zero-denominator convention.
pub fn scores(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleMetrics {
    pub index: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub class: String,
    pub rows: usize,
    pub per_rule: Vec<RuleMetrics>,
    pub aggregate: Metrics,
}

/// One row as seen by evaluation.
#[derive(Clone, Copy, Debug)]
pub struct EvalRow<'a> {
    pub id: u64,
    pub graph: &'a LabeledGraph,
    pub labels: &'a BTreeSet<String>,
}

/// One-vs-rest evaluation of `class`: a row is gold-positive iff `class` is
/// among its labels. Per-rule records use that rule alone; the aggregate uses
/// the class's full disjunction.
pub fn evaluate_rows(rs: &RuleSystem, class: &str, rows: &[EvalRow<'_>]) -> EvalReport {
    let rules = rs.rules(class);
    let fired: Vec<Vec<bool>> = rows
        .par_iter()
        .map(|row| rules.iter().map(|r| r.fires(row.graph)).collect())
        .collect();

    let mut per_rule: Vec<RuleMetrics> = (0..rules.len())
        .map(|index| RuleMetrics {
            index,
            metrics: Metrics::default(),
        })
        .collect();
    let mut aggregate = Metrics::default();
    for (row, fired) in rows.iter().zip(&fired) {
        let gold = row.labels.contains(class);
        for (rm, &f) in per_rule.iter_mut().zip(fired) {
            rm.metrics.record(row.id, gold, f);
        }
        aggregate.record(row.id, gold, fired.iter().any(|&f| f));
    }
    for rm in &mut per_rule {
        rm.metrics.finish();
    }
    aggregate.finish();
    EvalReport {
        class: class.to_owned(),
        rows: rows.len(),
        per_rule,
        aggregate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penman::parse_penman;

    fn pattern(text: &str) -> Pattern {
        Pattern::parse(text).unwrap()
    }

    fn graph() -> LabeledGraph {
        parse_penman("(u / into :2 (e / entity2) :1 (d / drop :2 (f / entity1)))").unwrap()
    }

    #[test]
    fn positive_clause() {
        let r = Rule::single("ed", pattern("(u / into :2 (v / entity2))"));
        assert!(r.fires(&graph()));
    }

    #[test]
    fn negated_clause_blocks_or_allows() {
        let p = Clause::positive(pattern("(u / into :2 (v / entity2))"));
        let blocked = Rule::new("ed", vec![p.clone(), Clause::negated(pattern("(u / drop)"))]).unwrap();
        assert!(!blocked.fires(&graph()));
        let allowed = Rule::new("ed", vec![p, Clause::negated(pattern("(u / pour)"))]).unwrap();
        assert!(allowed.fires(&graph()));
    }

    #[test]
    fn rule_invariants() {
        assert_eq!(Rule::new("c", vec![]).unwrap_err(), RuleError::NoClauses);
        assert_eq!(
            Rule::new("c", vec![Clause::negated(pattern("(u / x)"))]).unwrap_err(),
            RuleError::OnlyNegations
        );
    }

    #[test]
    fn predict_is_multi_label() {
        let g = graph();
        assert!(RuleSystem::new().predict(&g).is_empty());
        let mut rs = RuleSystem::new();
        rs.add_rule(Rule::single("ed", pattern("(u / into)")));
        assert_eq!(rs.predict(&g), BTreeSet::from(["ed".to_owned()]));
        rs.add_rule(Rule::single("other", pattern("(u / drop)")));
        rs.add_rule(Rule::single("never", pattern("(u / pour)")));
        assert_eq!(rs.predict(&g), BTreeSet::from(["ed".to_owned(), "other".to_owned()]));
        assert_eq!(
            rs.firing_rules(&g),
            vec![
                RuleRef { class: "ed".into(), index: 0 },
                RuleRef { class: "other".into(), index: 0 }
            ]
        );
    }

    #[test]
    fn rule_file_roundtrip() {
        let text = r#"{"classes": {"ed": [{"clauses": [
            {"penman": "(u_1 / into :2 (u_2 / entity2))", "negated": false},
            {"penman": "(x / lobe)", "negated": true}]}]}}"#;
        let rs = RuleSystem::from_json(text).unwrap();
        assert_eq!(rs.rules("ed")[0].clauses().len(), 2);
        let again = RuleSystem::from_json(&rs.to_json()).unwrap();
        assert_eq!(again, rs);
        assert_eq!(again.to_json(), rs.to_json());
        assert!(rs.to_json().contains("\"schema_version\": 1"));
    }

    #[test]
    fn rule_file_errors() {
        assert!(matches!(RuleSystem::from_json("{"), Err(RuleError::Json(_))));
        assert_eq!(
            RuleSystem::from_json(r#"{"schema_version": 99, "classes": {}}"#),
            Err(RuleError::SchemaVersion(99))
        );
        let bad = r#"{"classes": {"ed": [{"clauses": [{"penman": "(u / x"}]}]}}"#;
        assert!(matches!(
            RuleSystem::from_json(bad),
            Err(RuleError::Pattern { rule: 0, clause: 0, .. })
        ));
        let neg = r#"{"classes": {"ed": [{"clauses": [{"penman": "(u / x)", "negated": true}]}]}}"#;
        assert!(matches!(RuleSystem::from_json(neg), Err(RuleError::InvalidRule { .. })));
    }

    #[test]
    fn remove_and_replace() {
        let mut rs = RuleSystem::new();
        rs.add_rule(Rule::single("a", pattern("(u / x)")));
        rs.add_rule(Rule::single("a", pattern("(u / y)")));
        rs.replace_rule("a", 1, Rule::single("a", pattern("(u / z)"))).unwrap();
        assert_eq!(rs.rules("a")[1].clauses()[0].pattern.to_penman(), "(u_1 / z)");
        assert!(rs.replace_rule("a", 1, Rule::single("b", pattern("(u / z)"))).is_err());
        rs.remove_rule("a", 0).unwrap();
        assert_eq!(rs.remove_rule("a", 3), Err(RuleError::UnknownRule { class: "a".into(), index: 3 }));
        rs.remove_rule("a", 0).unwrap();
        assert!(rs.is_empty());
        assert_eq!(rs.remove_rule("a", 0), Err(RuleError::UnknownClass("a".into())));
    }

    #[test]
    fn score_conventions() {
        assert_eq!(scores(0, 0, 5), (0.0, 0.0, 0.0));
        let (p, r, f) = scores(1, 1, 1);
        assert_eq!((p, r), (0.5, 0.5));
        assert!((f - 0.5).abs() < 1e-12);
    }

    #[test]
    fn never_firing_rule_counts_all_positives_as_missed() {
        let g = graph();
        let pos = BTreeSet::from(["ed".to_owned()]);
        let neg = BTreeSet::new();
        let rows = vec![
            EvalRow { id: 1, graph: &g, labels: &pos },
            EvalRow { id: 2, graph: &g, labels: &pos },
            EvalRow { id: 3, graph: &g, labels: &neg },
        ];
        let mut rs = RuleSystem::new();
        rs.add_rule(Rule::single("ed", pattern("(u / pour)")));
        let report = evaluate_rows(&rs, "ed", &rows);
        let m = &report.per_rule[0].metrics;
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (0, 0, 2, 1));
        assert_eq!((m.precision, m.recall), (0.0, 0.0));
        assert_eq!(report.aggregate.false_negatives, vec![1, 2]);
    }

    #[test]
    fn metrics_serialize_with_fn_key() {
        let mut m = Metrics::default();
        m.record(7, true, false);
        m.finish();
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["fn"], 1);
        assert_eq!(v["false_negatives"][0], 7);
    }
}

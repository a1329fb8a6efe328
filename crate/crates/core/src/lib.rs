//! Rule-based classification of texts represented as directed labeled
//! graphs.
//!
//! Rules are disjunctions of conjunctions of (possibly negated) graph
//! patterns whose node and edge labels are anchored regular expressions.
//! The crate covers graph codecs (PENMAN, CoNLL-U), pattern matching,
//! subgraph feature extraction, rule evaluation, feature ranking for rule
//! suggestions, regex refinement and dataset persistence.

pub mod conllu;
pub mod dataset;
pub mod features;
pub mod graph;
pub mod learn;
pub mod matcher;
pub mod pattern;
pub mod penman;
pub mod refine;
pub mod rules;

#[cfg(any(test, feature = "testkit"))]
pub mod testkit;

pub use dataset::{AnnotationProposal, Dataset, DatasetError, DatasetFormat, DatasetRow, LoadOptions, Split};
pub use features::{FeatureConfig, FeatureId, FeatureTable};
pub use graph::{Edge, LabeledGraph, NodeId};
pub use learn::{RankMethod, Suggestion};
pub use matcher::{find_mappings, matches, MatchMapping};
pub use pattern::{LabelMatcher, Pattern, PatternError};
pub use penman::{parse_penman, serialize_penman, PenmanError};
pub use refine::{RefineError, RefinementResult};
pub use rules::{Clause, EvalReport, Metrics, Rule, RuleRef, RuleSystem};

//! Labeled and unlabeled corpora: loading, splitting, bootstrapping and
//! persistence of rules and annotations.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conllu::parse_conllu_sentences;
use crate::features::{build_feature_table, FeatureConfig, FeatureError, FeatureTable};
use crate::graph::{LabeledGraph, NodeId};
use crate::learn::{self, LearnError, RankMethod, Suggestion};
use crate::penman::{parse_penman, serialize_components};
use crate::refine::{self, RefineError, RefinementResult};
use crate::rules::{evaluate_rows, EvalReport, EvalRow, RuleError, RuleRef, RuleSystem};

pub const ANNOTATIONS_SCHEMA_VERSION: u32 = 1;
pub const RULES_FILE: &str = "rules.json";
pub const ANNOTATIONS_FILE: &str = "annotations.json";
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Unlabeled,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Self::Train),
            "val" | "validation" => Ok(Self::Val),
            "unlabeled" => Ok(Self::Unlabeled),
            other => Err(format!("unknown split {other:?} (expected train, val or unlabeled)")),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::Unlabeled => "unlabeled",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Jsonl,
    Tsv,
    Conllu,
}

impl std::str::FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(Self::Jsonl),
            "tsv" => Ok(Self::Tsv),
            "conllu" => Ok(Self::Conllu),
            other => Err(format!("unknown format {other:?} (expected jsonl, tsv or conllu)")),
        }
    }
}

impl DatasetFormat {
    /// Guess from the file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" => Some(Self::Jsonl),
            "tsv" => Some(Self::Tsv),
            "conllu" | "conll" => Some(Self::Conllu),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoadOptions {
    pub format: DatasetFormat,
    pub seed: u64,
    /// Rows without labels (and without an explicit split) go to the
    /// unlabeled split instead of train/val.
    pub unlabeled: bool,
    /// CoNLL-U only: one line of comma-separated labels per sentence.
    pub labels_path: Option<PathBuf>,
}

impl LoadOptions {
    pub fn new(format: DatasetFormat) -> Self {
        Self {
            format,
            seed: 0,
            unlabeled: false,
            labels_path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based line in the input file.
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub loaded: usize,
    pub errors: Vec<RowError>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no row could be parsed ({} errors{})", .0.len(), .0.first().map(|e| format!(", first: {e}")).unwrap_or_default())]
    NoRows(Vec<RowError>),
    #[error("labels file has {found} lines but the corpus has {expected} sentences")]
    SidecarLength { expected: usize, found: usize },
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("the {0} split is empty")]
    EmptySplit(Split),
    #[error("unknown row {0}")]
    UnknownRow(u64),
    #[error("row {0} is not unlabeled")]
    NotUnlabeled(u64),
    #[error("a proposal needs at least one label")]
    EmptyProposal,
    #[error("{file}: unsupported schema version {found}")]
    SchemaVersion { file: String, found: u32 },
    #[error("{file}: {message}")]
    Json { file: String, message: String },
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Refine(#[from] RefineError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetRow {
    pub id: u64,
    pub text: String,
    pub graph: LabeledGraph,
    pub penman: String,
    pub labels: BTreeSet<String>,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationProposal {
    pub row_id: u64,
    pub proposed_labels: BTreeSet<String>,
    pub provenance: Vec<RuleRef>,
}

/// Labels and split of every row, as persisted in the annotations file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotations {
    pub schema_version: u32,
    pub rows: Vec<RowAnnotation>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowAnnotation {
    pub id: u64,
    pub labels: BTreeSet<String>,
    pub split: Split,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dataset {
    rows: Vec<DatasetRow>,
    index: HashMap<u64, usize>,
}

/// Input record before graph parsing and splitting.
struct Record {
    line: usize,
    id: u64,
    text: String,
    graph: Result<(LabeledGraph, String), String>,
    labels: BTreeSet<String>,
    split: Option<Split>,
}

#[derive(Deserialize)]
struct JsonRow {
    #[serde(default)]
    text: String,
    penman: String,
    #[serde(default)]
    labels: Vec<String>,
    #[serde(default)]
    split: Option<String>,
}

fn read(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })
}

fn parse_labels(field: &str) -> BTreeSet<String> {
    field
        .split(',')
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect()
}

fn penman_graph(text: &str) -> Result<(LabeledGraph, String), String> {
    let text = text.trim();
    parse_penman(text)
        .map(|g| (g, text.to_owned()))
        .map_err(|e| format!("malformed PENMAN: {e}"))
}

fn jsonl_records(text: &str, errors: &mut Vec<RowError>) -> Vec<Record> {
    let mut out = Vec::new();
    let data_lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    for (id, (i, line)) in data_lines.enumerate() {
        let line_no = i + 1;
        let row: JsonRow = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                errors.push(RowError {
                    line: line_no,
                    message: format!("invalid JSON: {e}"),
                });
                continue;
            }
        };
        let split = match row.split.as_deref().map(str::parse::<Split>).transpose() {
            Ok(s) => s,
            Err(message) => {
                errors.push(RowError { line: line_no, message });
                continue;
            }
        };
        out.push(Record {
            line: line_no,
            id: id as u64,
            text: row.text,
            graph: penman_graph(&row.penman),
            labels: row.labels.iter().map(|l| l.trim().to_owned()).filter(|l| !l.is_empty()).collect(),
            split,
        });
    }
    out
}

fn tsv_records(text: &str, errors: &mut Vec<RowError>) -> Vec<Record> {
    let mut out = Vec::new();
    let data_lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    for (id, (i, line)) in data_lines.enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&cols.len()) {
            errors.push(RowError {
                line: i + 1,
                message: format!("expected text, PENMAN and labels columns, found {} columns", cols.len()),
            });
            continue;
        }
        out.push(Record {
            line: i + 1,
            id: id as u64,
            text: cols[0].to_owned(),
            graph: penman_graph(cols[1]),
            labels: cols.get(2).map(|c| parse_labels(c)).unwrap_or_default(),
            split: None,
        });
    }
    out
}

fn conllu_records(
    text: &str,
    sidecar: Option<&str>,
    errors: &mut Vec<RowError>,
) -> Result<Vec<Record>, DatasetError> {
    let sentences = match parse_conllu_sentences(text) {
        Ok(s) => s,
        Err(e) => {
            // token-level errors abort the whole sentence stream
            errors.push(RowError {
                line: conllu_error_line(&e),
                message: e.to_string(),
            });
            return Ok(Vec::new());
        }
    };
    let labels: Option<Vec<BTreeSet<String>>> = sidecar.map(|s| s.lines().map(parse_labels).collect());
    if let Some(l) = &labels {
        if l.len() != sentences.len() {
            return Err(DatasetError::SidecarLength {
                expected: sentences.len(),
                found: l.len(),
            });
        }
    }
    Ok(sentences
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let graph = conllu_graph(s.graph);
            Record {
                line: s.line,
                id: i as u64,
                text: s.text.unwrap_or_default(),
                graph,
                labels: labels.as_ref().map(|l| l[i].clone()).unwrap_or_default(),
                // without a sidecar every sentence arrives unlabeled
                split: if labels.is_none() { Some(Split::Unlabeled) } else { None },
            }
        })
        .collect())
}

fn conllu_error_line(e: &crate::conllu::ConlluError) -> usize {
    use crate::conllu::ConlluError::*;
    match e {
        ColumnCount { line, .. } | BadId { line, .. } | BadHead { line, .. } | HeadOutOfRange { line, .. } => *line,
    }
}

/// PENMAN text for a dependency graph; it must be a single tree.
pub fn conllu_graph(graph: LabeledGraph) -> Result<(LabeledGraph, String), String> {
    if graph.is_empty() {
        return Err("sentence has no tokens".to_owned());
    }
    let mut parts = serialize_components(&graph);
    if parts.len() != 1 {
        return Err(format!("sentence graph has {} disconnected parts", parts.len()));
    }
    Ok((graph, parts.remove(0)))
}

/// 64-bit mixer used to order rows for the seeded split.
pub fn split_hash(seed: u64, id: u64) -> u64 {
    let mut z = (seed ^ id).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Assigns train/val to `ids`: ordered by seeded hash, the first
/// `round(0.8 n)` become train. Returns train membership keyed by id.
pub fn assign_splits(ids: &[u64], seed: u64) -> BTreeMap<u64, Split> {
    let mut order: Vec<u64> = ids.to_vec();
    order.sort_by_key(|&id| (split_hash(seed, id), id));
    let n_train = (ids.len() as f64 * TRAIN_FRACTION).round() as usize;
    order
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id, if i < n_train { Split::Train } else { Split::Val }))
        .collect()
}

pub fn load_dataset(path: &Path, options: &LoadOptions) -> Result<(Dataset, LoadReport), DatasetError> {
    let text = read(path)?;
    let sidecar = match &options.labels_path {
        Some(p) => Some(read(p)?),
        None => None,
    };
    parse_dataset(&text, sidecar.as_deref(), options)
}

/// Like [`load_dataset`] on in-memory text. `sidecar` overrides
/// `options.labels_path`.
pub fn parse_dataset(
    text: &str,
    sidecar: Option<&str>,
    options: &LoadOptions,
) -> Result<(Dataset, LoadReport), DatasetError> {
    let mut errors = Vec::new();
    let records = match options.format {
        DatasetFormat::Jsonl => jsonl_records(text, &mut errors),
        DatasetFormat::Tsv => tsv_records(text, &mut errors),
        DatasetFormat::Conllu => conllu_records(text, sidecar, &mut errors)?,
    };

    let mut parsed = Vec::new();
    let mut explicit = BTreeSet::new();
    for r in records {
        if r.split.is_some() {
            explicit.insert(r.id);
        }
        match r.graph {
            Ok((graph, penman)) => parsed.push(DatasetRow {
                id: r.id,
                text: r.text,
                graph,
                penman,
                split: r
                    .split
                    .or_else(|| (options.unlabeled && r.labels.is_empty()).then_some(Split::Unlabeled))
                    .unwrap_or(Split::Train),
                labels: r.labels,
            }),
            Err(message) => errors.push(RowError { line: r.line, message }),
        }
    }
    errors.sort_by_key(|e| e.line);
    if parsed.is_empty() {
        return Err(DatasetError::NoRows(errors));
    }

    // rows that arrived without a split get the seeded 80/20 assignment
    let pending: Vec<u64> = parsed
        .iter()
        .filter(|r| !explicit.contains(&r.id) && r.split != Split::Unlabeled)
        .map(|r| r.id)
        .collect();
    let assigned = assign_splits(&pending, options.seed);
    for row in &mut parsed {
        if let Some(&s) = assigned.get(&row.id) {
            row.split = s;
        }
    }

    let report = LoadReport {
        loaded: parsed.len(),
        errors,
    };
    Ok((Dataset::from_rows(parsed), report))
}

impl Dataset {
    /// Panics on duplicate ids.
    pub fn from_rows(rows: Vec<DatasetRow>) -> Self {
        let mut index = HashMap::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            assert!(index.insert(r.id, i).is_none(), "duplicate row id {}", r.id);
        }
        Self { rows, index }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[DatasetRow] {
        &self.rows
    }

    pub fn row(&self, id: u64) -> Option<&DatasetRow> {
        self.index.get(&id).map(|&i| &self.rows[i])
    }

    pub fn split_rows(&self, split: Split) -> impl Iterator<Item = &DatasetRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split_rows(split).count()
    }

    pub fn eval_rows(&self, split: Split) -> Vec<EvalRow<'_>> {
        self.split_rows(split)
            .map(|r| EvalRow {
                id: r.id,
                graph: &r.graph,
                labels: &r.labels,
            })
            .collect()
    }

    /// Every label carried by some row.
    pub fn classes(&self) -> BTreeSet<String> {
        self.rows.iter().flat_map(|r| r.labels.iter().cloned()).collect()
    }

    pub fn has_class(&self, class: &str) -> bool {
        self.rows.iter().any(|r| r.labels.contains(class))
    }

    fn check_class(&self, class: &str) -> Result<(), DatasetError> {
        if self.has_class(class) {
            Ok(())
        } else {
            Err(DatasetError::UnknownClass(class.to_owned()))
        }
    }

    pub fn evaluate(&self, rs: &RuleSystem, class: &str, split: Split) -> Result<EvalReport, DatasetError> {
        self.check_class(class)?;
        let rows = self.eval_rows(split);
        if rows.is_empty() {
            return Err(DatasetError::EmptySplit(split));
        }
        Ok(evaluate_rows(rs, class, &rows))
    }

    /// Feature table over the training rows, in row order.
    pub fn training_table(&self, config: FeatureConfig) -> Result<FeatureTable, DatasetError> {
        let rows: Vec<(u64, &LabeledGraph)> = self.split_rows(Split::Train).map(|r| (r.id, &r.graph)).collect();
        if rows.is_empty() {
            return Err(DatasetError::EmptySplit(Split::Train));
        }
        Ok(build_feature_table(&rows, config)?)
    }

    /// Gold membership of `class` for the rows of `table`.
    pub fn gold(&self, table: &FeatureTable, class: &str) -> Vec<bool> {
        table
            .row_ids
            .iter()
            .map(|id| self.row(*id).is_some_and(|r| r.labels.contains(class)))
            .collect()
    }

    pub fn suggest(
        &self,
        table: &FeatureTable,
        class: &str,
        k: usize,
        method: RankMethod,
        max_depth: usize,
    ) -> Result<Vec<Suggestion>, DatasetError> {
        self.check_class(class)?;
        let gold = self.gold(table, class);
        Ok(learn::suggest(table, &gold, k, method, max_depth)?)
    }

    pub fn refine(
        &self,
        rs: &RuleSystem,
        class: &str,
        rule_index: usize,
        clause_index: usize,
        node: NodeId,
        threshold: f64,
    ) -> Result<RefinementResult, DatasetError> {
        self.check_class(class)?;
        let rule = rs.rule(class, rule_index)?;
        let rows = self.eval_rows(Split::Train);
        Ok(refine::refine(rule, clause_index, node, &rows, class, threshold)?)
    }

    /// Proposals for unlabeled rows on which some rule fires, in row order.
    pub fn bootstrap_annotate(&self, rs: &RuleSystem) -> Vec<AnnotationProposal> {
        use rayon::prelude::*;
        let unlabeled: Vec<&DatasetRow> = self.split_rows(Split::Unlabeled).collect();
        unlabeled
            .par_iter()
            .filter_map(|r| {
                let provenance = rs.firing_rules(&r.graph);
                if provenance.is_empty() {
                    return None;
                }
                Some(AnnotationProposal {
                    row_id: r.id,
                    proposed_labels: provenance.iter().map(|p| p.class.clone()).collect(),
                    provenance,
                })
            })
            .collect()
    }

    /// Labels an unlabeled row and moves it to train.
    pub fn accept_proposal(&mut self, row_id: u64, labels: BTreeSet<String>) -> Result<(), DatasetError> {
        let i = *self.index.get(&row_id).ok_or(DatasetError::UnknownRow(row_id))?;
        if labels.is_empty() {
            return Err(DatasetError::EmptyProposal);
        }
        let row = &mut self.rows[i];
        if row.split != Split::Unlabeled {
            return Err(DatasetError::NotUnlabeled(row_id));
        }
        row.labels = labels;
        row.split = Split::Train;
        Ok(())
    }

    pub fn annotations(&self) -> Annotations {
        Annotations {
            schema_version: ANNOTATIONS_SCHEMA_VERSION,
            rows: self
                .rows
                .iter()
                .map(|r| RowAnnotation {
                    id: r.id,
                    labels: r.labels.clone(),
                    split: r.split,
                })
                .collect(),
        }
    }

    /// Overwrites labels and splits from saved annotations. Every id must
    /// exist; nothing changes on error.
    pub fn apply_annotations(&mut self, ann: &Annotations) -> Result<(), DatasetError> {
        if let Some(a) = ann.rows.iter().find(|a| !self.index.contains_key(&a.id)) {
            return Err(DatasetError::UnknownRow(a.id));
        }
        for a in &ann.rows {
            let row = &mut self.rows[self.index[&a.id]];
            row.labels = a.labels.clone();
            row.split = a.split;
        }
        Ok(())
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and an atomic rename, so readers see either the old or the new content.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.to_owned(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn save_rules(path: &Path, rs: &RuleSystem) -> Result<(), DatasetError> {
    let mut text = rs.to_json();
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// A missing file is an empty rule system.
pub fn load_rules(path: &Path) -> Result<RuleSystem, DatasetError> {
    if !path.exists() {
        return Ok(RuleSystem::new());
    }
    let text = read(path)?;
    RuleSystem::from_json(&text).map_err(|e| match e {
        RuleError::SchemaVersion(found) => DatasetError::SchemaVersion {
            file: path.display().to_string(),
            found,
        },
        other => DatasetError::Rules(other),
    })
}

pub fn save_annotations(path: &Path, ann: &Annotations) -> Result<(), DatasetError> {
    let mut text = serde_json::to_string_pretty(ann).expect("annotations serialize");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn load_annotations(path: &Path) -> Result<Option<Annotations>, DatasetError> {
    if !path.exists() {
        return Ok(None);
    }
    let text = read(path)?;
    let file = path.display().to_string();
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| DatasetError::Json {
        file: file.clone(),
        message: e.to_string(),
    })?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == ANNOTATIONS_SCHEMA_VERSION as u64 => {}
        Some(v) => {
            return Err(DatasetError::SchemaVersion {
                file,
                found: v.min(u32::MAX as u64) as u32,
            })
        }
        None => {
            return Err(DatasetError::Json {
                file,
                message: "missing schema_version".to_owned(),
            })
        }
    }
    serde_json::from_value(value)
        .map(Some)
        .map_err(|e| DatasetError::Json {
            file,
            message: e.to_string(),
        })
}

/// Saves `rules.json` and, when a dataset is given, `annotations.json`.
pub fn save_state(dir: &Path, rs: &RuleSystem, dataset: Option<&Dataset>) -> Result<(), DatasetError> {
    save_rules(&dir.join(RULES_FILE), rs)?;
    if let Some(d) = dataset {
        save_annotations(&dir.join(ANNOTATIONS_FILE), &d.annotations())?;
    }
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SavedState {
    pub rules: RuleSystem,
    pub annotations: Option<Annotations>,
}

pub fn load_state(dir: &Path) -> Result<SavedState, DatasetError> {
    Ok(SavedState {
        rules: load_rules(&dir.join(RULES_FILE))?,
        annotations: load_annotations(&dir.join(ANNOTATIONS_FILE))?,
    })
}

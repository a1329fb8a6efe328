//! JSON-over-HTTP endpoints.

use std::collections::BTreeSet;
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use graphrule_core::dataset::{DatasetError, DatasetRow, Split};
use graphrule_core::learn::{LearnError, RankMethod};
use graphrule_core::pattern::{Pattern, PatternError};
use graphrule_core::refine::RefineError;
use graphrule_core::rules::{Rule, RuleEntry, RuleError, RuleFile, RuleSystem};
use graphrule_core::{parse_penman, Dataset, NodeId};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::Mode;
use crate::session::Session;

pub const MAX_PAGE_SIZE: usize = 1000;
pub const DEFAULT_PAGE_SIZE: usize = 50;

#[derive(Clone)]
pub struct AppState {
    session: Arc<RwLock<Session>>,
}

impl AppState {
    pub fn new(session: Session) -> Self {
        Self {
            session: Arc::new(RwLock::new(session)),
        }
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Session> {
        self.session.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, Session> {
        self.session.write().unwrap_or_else(|e| e.into_inner())
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/classes", get(classes))
        .route("/rows", get(rows))
        .route("/rows/{id}/dot", get(row_dot))
        .route("/rules", get(get_rules).put(put_rules))
        .route("/rules/{class}", post(add_rule))
        .route("/rules/{class}/{index}", delete(delete_rule))
        .route("/evaluate", post(evaluate))
        .route("/suggest", post(suggest))
        .route("/refine", post(refine))
        .route("/predict", post(predict))
        .route("/proposals", post(proposals))
        .route("/proposals/{row_id}/accept", post(accept_proposal))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    detail: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            detail: None,
        }
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }

    fn mode(mode: Mode, what: &str) -> Self {
        Self::new(
            StatusCode::CONFLICT,
            "mode-forbidden",
            format!("{what} is not available in {} mode", mode.as_str()),
        )
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"error": self.code, "message": self.message});
        if let Some(d) = self.detail {
            body["position"] = d;
        }
        (self.status, Json(body)).into_response()
    }
}

fn pattern_error(e: &PatternError, at: Value) -> ApiError {
    let mut at = at;
    if let PatternError::Penman(p) = e {
        at["byte"] = json!(p.position);
    }
    ApiError::new(StatusCode::BAD_REQUEST, "malformed-penman", e.to_string()).with_detail(at)
}

impl From<RuleError> for ApiError {
    fn from(e: RuleError) -> Self {
        use RuleError::*;
        match &e {
            Pattern {
                class,
                rule,
                clause,
                source,
            } => pattern_error(source, json!({"class": class, "rule": rule, "clause": clause})),
            NoClauses | OnlyNegations | InvalidRule { .. } => {
                ApiError::new(StatusCode::BAD_REQUEST, "invalid-rule", e.to_string())
            }
            Json(_) => ApiError::new(StatusCode::BAD_REQUEST, "malformed-json", e.to_string()),
            SchemaVersion(_) => ApiError::new(StatusCode::BAD_REQUEST, "schema-version", e.to_string()),
            UnknownClass(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown-class", e.to_string()),
            UnknownRule { .. } => ApiError::new(StatusCode::NOT_FOUND, "unknown-rule", e.to_string()),
        }
    }
}

impl From<RefineError> for ApiError {
    fn from(e: RefineError) -> Self {
        use RefineError::*;
        let (status, code) = match &e {
            UnknownClause(_) => (StatusCode::NOT_FOUND, "unknown-clause"),
            UnknownNode(_) => (StatusCode::NOT_FOUND, "unknown-node"),
            NegatedClause(_) => (StatusCode::BAD_REQUEST, "negated-clause"),
            NodeNotRegex(_) => (StatusCode::BAD_REQUEST, "node-not-regex"),
            EmptySplit => (StatusCode::UNPROCESSABLE_ENTITY, "empty-split"),
            NoPositiveExamples => (StatusCode::UNPROCESSABLE_ENTITY, "no-positive-examples"),
            NoCandidates => (StatusCode::UNPROCESSABLE_ENTITY, "no-candidates"),
            NoneAccepted => (StatusCode::UNPROCESSABLE_ENTITY, "none-accepted"),
            Pattern(p) => return pattern_error(p, json!({})),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<LearnError> for ApiError {
    fn from(e: LearnError) -> Self {
        let code = match e {
            LearnError::DegenerateLabels => "degenerate-labels",
            LearnError::NoPositiveExamples => "no-positive-examples",
            LearnError::ZeroDepth => "zero-depth",
            LearnError::LengthMismatch { .. } => return ApiError::internal(e.to_string()),
        };
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, e.to_string())
    }
}

impl From<DatasetError> for ApiError {
    fn from(e: DatasetError) -> Self {
        use DatasetError::*;
        match e {
            Rules(r) => r.into(),
            Refine(r) => r.into(),
            Learn(l) => l.into(),
            UnknownClass(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown-class", e.to_string()),
            UnknownRow(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown-row", e.to_string()),
            EmptySplit(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "empty-split", e.to_string()),
            NotUnlabeled(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "not-unlabeled", e.to_string()),
            EmptyProposal => ApiError::new(StatusCode::BAD_REQUEST, "empty-proposal", e.to_string()),
            Features(_) => ApiError::new(StatusCode::BAD_REQUEST, "feature-bound", e.to_string()),
            other => ApiError::internal(other.to_string()),
        }
    }
}

/// JSON body with line/column on syntax or shape errors.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let text = if body.is_empty() { &b"{}"[..] } else { &body[..] };
    serde_json::from_slice(text).map_err(|e| {
        ApiError::new(StatusCode::BAD_REQUEST, "malformed-json", e.to_string())
            .with_detail(json!({"line": e.line(), "column": e.column()}))
    })
}

fn dataset<'a>(s: &'a Session, what: &str) -> Result<&'a Dataset, ApiError> {
    s.dataset.as_ref().ok_or_else(|| ApiError::mode(s.mode(), what))
}

fn mutable(s: &Session, what: &str) -> Result<(), ApiError> {
    if s.mode() == Mode::Inference {
        Err(ApiError::mode(s.mode(), what))
    } else {
        Ok(())
    }
}

fn check_class(s: &Session, class: &str) -> Result<(), ApiError> {
    match &s.dataset {
        Some(d) if !d.has_class(class) => Err(DatasetError::UnknownClass(class.to_owned()).into()),
        _ => Ok(()),
    }
}

fn autosave(s: &Session) -> Result<(), ApiError> {
    s.save().map_err(|e| ApiError::internal(format!("autosave failed: {e}")))
}

async fn blocking<T, F>(app: AppState, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Session) -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&app.read()))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

fn rules_view(rs: &RuleSystem) -> RuleFile {
    RuleFile {
        schema_version: None,
        ..rs.to_file()
    }
}

fn rule_entry(rule: &Rule) -> RuleEntry {
    let mut rs = RuleSystem::new();
    rs.add_rule(rule.clone());
    rs.to_file()
        .classes
        .into_values()
        .next()
        .and_then(|mut v| v.pop())
        .expect("one rule")
}

#[derive(Serialize)]
struct RowView<'a> {
    id: u64,
    text: &'a str,
    penman: &'a str,
    labels: &'a BTreeSet<String>,
    split: Split,
}

impl<'a> From<&'a DatasetRow> for RowView<'a> {
    fn from(r: &'a DatasetRow) -> Self {
        Self {
            id: r.id,
            text: &r.text,
            penman: &r.penman,
            labels: &r.labels,
            split: r.split,
        }
    }
}

async fn health(State(app): State<AppState>) -> Json<Value> {
    let s = app.read();
    Json(json!({
        "status": "ok",
        "mode": s.mode().as_str(),
        "rows": s.dataset.as_ref().map_or(0, Dataset::len),
        "load_errors": s.load_report.as_ref().map_or(0, |r| r.errors.len()),
    }))
}

async fn classes(State(app): State<AppState>) -> Json<Value> {
    let s = app.read();
    let mut names: BTreeSet<String> = s.rules.classes().map(str::to_owned).collect();
    if let Some(d) = &s.dataset {
        names = d.classes();
    }
    let list: Vec<Value> = names
        .iter()
        .map(|c| {
            let count = |split| {
                s.dataset
                    .as_ref()
                    .map_or(0, |d| d.split_rows(split).filter(|r| r.labels.contains(c)).count())
            };
            json!({
                "name": c,
                "train": count(Split::Train),
                "val": count(Split::Val),
                "rules": s.rules.rules(c).len(),
            })
        })
        .collect();
    Json(json!({ "classes": list }))
}

#[derive(Deserialize)]
struct RowsQuery {
    split: Option<Split>,
    class: Option<String>,
    page: Option<usize>,
    page_size: Option<usize>,
}

async fn rows(State(app): State<AppState>, query: Result<Query<RowsQuery>, QueryRejection>) -> Result<Json<Value>, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed-query", e.body_text()))?;
    let s = app.read();
    let d = dataset(&s, "browsing rows")?;
    if let Some(c) = &q.class {
        check_class(&s, c)?;
    }
    let page = q.page.unwrap_or(0);
    let page_size = q.page_size.unwrap_or(DEFAULT_PAGE_SIZE);
    if page_size == 0 || page_size > MAX_PAGE_SIZE {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "malformed-query",
            format!("page_size must be within 1..={MAX_PAGE_SIZE}"),
        ));
    }
    let selected: Vec<&DatasetRow> = d
        .rows()
        .iter()
        .filter(|r| q.split.is_none_or(|sp| r.split == sp))
        .filter(|r| q.class.as_ref().is_none_or(|c| r.labels.contains(c)))
        .collect();
    let total = selected.len();
    let listed: Vec<RowView> = selected
        .into_iter()
        .skip(page.saturating_mul(page_size))
        .take(page_size)
        .map(RowView::from)
        .collect();
    Ok(Json(json!({
        "page": page,
        "page_size": page_size,
        "total": total,
        "pages": total.div_ceil(page_size),
        "rows": listed,
    })))
}

async fn row_dot(State(app): State<AppState>, Path(id): Path<u64>) -> Result<Response, ApiError> {
    let s = app.read();
    let d = dataset(&s, "browsing rows")?;
    let row = d.row(id).ok_or(DatasetError::UnknownRow(id))?;
    Ok((
        [(header::CONTENT_TYPE, "text/vnd.graphviz; charset=utf-8")],
        row.graph.to_dot(),
    )
        .into_response())
}

async fn get_rules(State(app): State<AppState>) -> Json<RuleFile> {
    Json(rules_view(&app.read().rules))
}

async fn put_rules(State(app): State<AppState>, body: Bytes) -> Result<Json<RuleFile>, ApiError> {
    let file: RuleFile = parse_body(&body)?;
    let mut s = app.write();
    mutable(&s, "editing rules")?;
    let rs = RuleSystem::from_file(&file)?;
    for c in rs.classes() {
        check_class(&s, c)?;
    }
    s.rules = rs;
    autosave(&s)?;
    Ok(Json(rules_view(&s.rules)))
}

async fn add_rule(
    State(app): State<AppState>,
    Path(class): Path<String>,
    body: Bytes,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let entry: RuleEntry = parse_body(&body)?;
    let mut s = app.write();
    mutable(&s, "editing rules")?;
    check_class(&s, &class)?;
    let rule = entry.into_rule(&class)?;
    let stored = rule_entry(&rule);
    let index = s.rules.add_rule(rule);
    autosave(&s)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({"class": class, "index": index, "rule": stored})),
    ))
}

async fn delete_rule(
    State(app): State<AppState>,
    Path((class, index)): Path<(String, usize)>,
) -> Result<Json<Value>, ApiError> {
    let mut s = app.write();
    mutable(&s, "editing rules")?;
    let removed = s.rules.remove_rule(&class, index)?;
    autosave(&s)?;
    Ok(Json(json!({"class": class, "index": index, "removed": rule_entry(&removed)})))
}

fn default_split() -> Split {
    Split::Train
}

#[derive(Deserialize)]
struct EvaluateRequest {
    class: String,
    #[serde(default = "default_split")]
    split: Split,
}

async fn evaluate(State(app): State<AppState>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: EvaluateRequest = parse_body(&body)?;
    blocking(app, move |s| {
        let d = dataset(s, "evaluation")?;
        let report = d.evaluate(&s.rules, &req.class, req.split)?;
        Ok(Json(serde_json::to_value(report).expect("report serializes")))
    })
    .await
}

#[derive(Deserialize)]
struct SuggestRequest {
    class: String,
    k: Option<usize>,
    method: Option<RankMethod>,
}

async fn suggest(State(app): State<AppState>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: SuggestRequest = parse_body(&body)?;
    blocking(app, move |s| {
        let d = dataset(s, "suggestions")?;
        check_class(s, &req.class)?;
        let method = req.method.unwrap_or(RankMethod::Gini);
        let table = s.training_table(d)?;
        let k = req.k.unwrap_or(s.config.suggestion_k);
        let suggestions = d.suggest(&table, &req.class, k, method, s.config.max_depth)?;
        Ok(Json(json!({"class": req.class, "method": method, "suggestions": suggestions})))
    })
    .await
}

/// A pattern node given by id or by its `u_k` variable.
#[derive(Deserialize, Clone)]
#[serde(untagged)]
pub enum NodeRef {
    Id(u32),
    Name(String),
}

impl NodeRef {
    pub fn resolve(&self, pattern: &Pattern) -> Option<NodeId> {
        match self {
            NodeRef::Id(n) => Some(NodeId(*n)),
            NodeRef::Name(name) => pattern
                .node_of_variable(name)
                .or_else(|| name.parse().ok().map(NodeId)),
        }
    }
}

#[derive(Deserialize)]
struct RefineRequest {
    class: String,
    rule_index: usize,
    #[serde(default)]
    clause_index: usize,
    node: NodeRef,
    threshold: Option<f64>,
    #[serde(default)]
    apply: bool,
}

async fn refine(State(app): State<AppState>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: RefineRequest = parse_body(&body)?;
    if req.apply {
        mutable(&app.read(), "applying a refinement")?;
    }
    let run = |s: &Session, req: &RefineRequest| -> Result<_, ApiError> {
        let d = dataset(s, "refinement")?;
        check_class(s, &req.class)?;
        let threshold = req.threshold.unwrap_or(s.config.refine_threshold);
        let rule = s.rules.rule(&req.class, req.rule_index)?;
        let clause = rule
            .clauses()
            .get(req.clause_index)
            .ok_or(RefineError::UnknownClause(req.clause_index))?;
        let node = req.node.resolve(&clause.pattern).ok_or_else(|| {
            RefineError::UnknownNode(match &req.node {
                NodeRef::Id(n) => n.to_string(),
                NodeRef::Name(n) => n.clone(),
            })
        })?;
        Ok(d.refine(&s.rules, &req.class, req.rule_index, req.clause_index, node, threshold)?)
    };

    if !req.apply {
        let result = blocking(app, move |s| run(s, &req)).await?;
        let mut v = serde_json::to_value(result).expect("result serializes");
        v["applied"] = json!(false);
        return Ok(Json(v));
    }

    // the write lock keeps rules from changing between refining and applying
    let mut s = app.write();
    let result = run(&s, &req)?;
    let rule = s.rules.rule(&req.class, req.rule_index)?;
    let mut clauses = rule.clauses().to_vec();
    clauses[req.clause_index].pattern = result.refined_pattern.clone();
    let refined = Rule::new(req.class.clone(), clauses)?;
    let entry = rule_entry(&refined);
    s.rules.replace_rule(&req.class, req.rule_index, refined)?;
    autosave(&s)?;
    let mut v = serde_json::to_value(result).expect("result serializes");
    v["applied"] = json!(true);
    v["rule"] = serde_json::to_value(entry).expect("rule serializes");
    Ok(Json(v))
}

#[derive(Deserialize)]
struct PredictRequest {
    penman: Vec<String>,
}

async fn predict(State(app): State<AppState>, body: Bytes) -> Result<Json<Vec<BTreeSet<String>>>, ApiError> {
    let req: PredictRequest = parse_body(&body)?;
    let graphs = req
        .penman
        .iter()
        .enumerate()
        .map(|(i, text)| {
            parse_penman(text).map_err(|e| {
                ApiError::new(StatusCode::BAD_REQUEST, "malformed-penman", e.to_string())
                    .with_detail(json!({"index": i, "byte": e.position}))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    blocking(app, move |s| Ok(Json(graphs.iter().map(|g| s.rules.predict(g)).collect()))).await
}

async fn proposals(State(app): State<AppState>) -> Result<Json<Value>, ApiError> {
    if app.read().mode() != Mode::Advanced {
        return Err(ApiError::mode(app.read().mode(), "bootstrapping"));
    }
    blocking(app, |s| {
        let d = dataset(s, "bootstrapping")?;
        Ok(Json(json!({"proposals": d.bootstrap_annotate(&s.rules)})))
    })
    .await
}

#[derive(Deserialize, Default)]
struct AcceptRequest {
    labels: Option<BTreeSet<String>>,
}

async fn accept_proposal(
    State(app): State<AppState>,
    Path(row_id): Path<u64>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let req: AcceptRequest = parse_body(&body)?;
    let mut s = app.write();
    if s.mode() != Mode::Advanced {
        return Err(ApiError::mode(s.mode(), "bootstrapping"));
    }
    let labels = match req.labels {
        Some(l) => l,
        None => {
            let d = dataset(&s, "bootstrapping")?;
            let row = d.row(row_id).ok_or(DatasetError::UnknownRow(row_id))?;
            let predicted = s.rules.predict(&row.graph);
            if predicted.is_empty() {
                return Err(ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "no-proposal",
                    format!("no rule fires on row {row_id}"),
                ));
            }
            predicted
        }
    };
    let session = &mut *s;
    let d = session
        .dataset
        .as_mut()
        .ok_or_else(|| ApiError::mode(Mode::Advanced, "bootstrapping"))?;
    d.accept_proposal(row_id, labels)?;
    session.invalidate_table();
    autosave(session)?;
    let row = session.dataset.as_ref().and_then(|d| d.row(row_id)).expect("row exists");
    Ok(Json(serde_json::to_value(RowView::from(row)).expect("row serializes")))
}

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use graphrule_core::testkit::{synthetic_corpus, to_jsonl};
use graphrule_service::{router, AppState, Mode, ServiceConfig, Session};
use http_body_util::BodyExt;
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde_json::Value;
use tower::ServiceExt;

pub const CLASS: &str = "entity-destination";

/// Synthetic corpus of `n` rows written to `dir/corpus.jsonl`.
pub fn write_corpus(dir: &Path, seed: u64, n: usize) -> PathBuf {
    let path = dir.join("corpus.jsonl");
    std::fs::write(&path, to_jsonl(&synthetic_corpus(&mut StdRng::seed_from_u64(seed), n))).unwrap();
    path
}

/// JSONL rows with an explicit train split whose `into -2-> entity2`
/// evaluation gives the requested tp and fp.
pub fn counted_corpus(tp: usize, fp: usize, fn_: usize, tn: usize) -> String {
    let hit = "(i / into :2 (e / entity2))";
    let miss = "(i / into :1 (e / entity2))";
    let mut out = String::new();
    for (n, penman, positive) in [(tp, hit, true), (fp, hit, false), (fn_, miss, true), (tn, miss, false)] {
        for _ in 0..n {
            let labels: Vec<&str> = if positive { vec![CLASS] } else { vec![] };
            out.push_str(
                &serde_json::json!({"text": "t", "penman": penman, "labels": labels, "split": "train"}).to_string(),
            );
            out.push('\n');
        }
    }
    out
}

pub fn config(mode: Mode, state: &Path, dataset: Option<&Path>) -> ServiceConfig {
    let mut c = ServiceConfig::new(mode, state);
    c.dataset_path = dataset.map(Path::to_owned);
    c
}

pub fn app(config: ServiceConfig) -> AppState {
    AppState::new(Session::open(config).expect("session opens"))
}

pub async fn call(app: &AppState, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let (status, text) = call_text(app, method, uri, body).await;
    let value = if text.is_empty() {
        Value::Null
    } else {
        serde_json::from_str(&text).unwrap_or(Value::String(text))
    };
    (status, value)
}

pub async fn call_text(app: &AppState, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.unwrap_or("").to_owned()))
        .unwrap();
    let resp = router(app.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

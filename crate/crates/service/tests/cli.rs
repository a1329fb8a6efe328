mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{counted_corpus, write_corpus, CLASS};
use graphrule_core::testkit::PLANTED_EDGE;
use serde_json::{json, Value};

fn graphrule(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphrule"))
        .args(args)
        .env_remove("GRAPHRULE_STATE_DIR")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}", String::from_utf8_lossy(&out.stdout));
    })
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn planted_rules(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("rules.json");
    std::fs::write(&path, json!({"classes": {CLASS: [{"clauses": [{"penman": PLANTED_EDGE}]}]}}).to_string()).unwrap();
    path
}

#[test]
fn exit_codes() {
    assert_eq!(graphrule(&["--help"]).status.code(), Some(0));
    assert_eq!(graphrule(&["--version"]).status.code(), Some(0));
    assert_eq!(graphrule(&[]).status.code(), Some(1));
    assert_eq!(graphrule(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(graphrule(&["evaluate", "--class", "x"]).status.code(), Some(1));
    let out = graphrule(&["predict", "--rules", "/nonexistent/rules.json", "--input", "/nonexistent/in.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    assert!(out.stdout.is_empty());
}

#[test]
fn predict_with_empty_rules_gives_empty_sets() {
    let dir = tempfile::tempdir().unwrap();
    let rules = dir.path().join("rules.json");
    std::fs::write(&rules, "{}").unwrap();
    let input = dir.path().join("graphs.jsonl");
    std::fs::write(&input, format!("{}\n{}\n", json!(PLANTED_EDGE), json!({"penman": "(a / b :r (c / d))"}))).unwrap();
    let out = graphrule(&["predict", "--rules", s(&rules), "--input", s(&input)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| l["labels"] == json!([])));
}

#[test]
fn predict_writes_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let rules = planted_rules(dir.path());
    let input = dir.path().join("graphs.jsonl");
    std::fs::write(&input, format!("{}\n\n{}\n", json!(PLANTED_EDGE), json!("(a / into :1 (b / entity2))"))).unwrap();
    let output = dir.path().join("labels.jsonl");
    let out = graphrule(&["predict", "--rules", s(&rules), "--input", s(&input), "--output", s(&output)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["rows"], 2);
    let written = std::fs::read_to_string(&output).unwrap();
    let labels: Vec<Value> = written.lines().map(|l| serde_json::from_str::<Value>(l).unwrap()["labels"].clone()).collect();
    assert_eq!(labels, vec![json!([CLASS]), json!([])]);
}

#[test]
fn predict_rejects_malformed_graphs() {
    let dir = tempfile::tempdir().unwrap();
    let rules = planted_rules(dir.path());
    let input = dir.path().join("graphs.jsonl");
    std::fs::write(&input, "\"(a / b\"\n").unwrap();
    let out = graphrule(&["predict", "--rules", s(&rules), "--input", s(&input)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn evaluate_refined_rule_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let rules = planted_rules(dir.path());
    let data = dir.path().join("fixture.jsonl");
    std::fs::write(&data, counted_corpus(138, 1, 12, 40)).unwrap();
    let out = graphrule(&["evaluate", "--rules", s(&rules), "--dataset", s(&data), "--class", CLASS, "--split", "train"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    let p = report["aggregate"]["precision"].as_f64().unwrap();
    assert!((p - 0.993).abs() < 0.0005, "{p}");
    assert_eq!(report["aggregate"]["tp"], 138);
    assert_eq!(report["aggregate"]["fp"], 1);

    let out = graphrule(&["evaluate", "--rules", s(&rules), "--dataset", s(&data), "--class", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    let out = graphrule(&["evaluate", "--rules", s(&rules), "--dataset", s(&data), "--class", CLASS, "--split", "bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn suggest_prints_ranked_json() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_corpus(dir.path(), 9, 300);
    let out = graphrule(&["suggest", "--dataset", s(&data), "--class", CLASS, "-k", "4", "--method", "tpfp"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let body = stdout_json(&out);
    assert_eq!(body["method"], "tp_fp");
    assert_eq!(body["suggestions"].as_array().unwrap().len(), 4);
    let out = graphrule(&["suggest", "--dataset", s(&data), "--class", CLASS, "--method", "entropy"]);
    assert_eq!(out.status.code(), Some(1));
}

const TWO_SENTENCES: &str = "\
# sent_id = 1
# text = We put it into boxes
1\tWe\twe\tPRON\t_\t_\t2\tnsubj\t_\t_
2\tput\tput\tVERB\t_\t_\t0\troot\t_\t_
3\tit\tit\tPRON\t_\t_\t2\tobj\t_\t_
4\tinto\tinto\tADP\t_\t_\t5\tcase\t_\t_
5\tboxes\tbox\tNOUN\t_\t_\t2\tobl\t_\t_

# sent_id = 2
# text = Lungs divide
1\tLungs\tlung\tNOUN\t_\t_\t2\tnsubj\t_\t_
2\tdivide\tdivide\tVERB\t_\t_\t0\troot\t_\t_

";

#[test]
fn convert_conllu_to_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("two.conllu");
    std::fs::write(&input, TWO_SENTENCES).unwrap();
    let out = graphrule(&["convert", "--from", "conllu", "--to", "jsonl", "--input", s(&input)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["text"], "We put it into boxes");
    for row in &rows {
        graphrule_core::parse_penman(row["penman"].as_str().unwrap()).unwrap();
    }
    let g = graphrule_core::parse_penman(rows[1]["penman"].as_str().unwrap()).unwrap();
    assert_eq!(g.node_count(), 2);

    // the converted file loads as a dataset
    let converted = dir.path().join("two.jsonl");
    let labels = dir.path().join("labels.txt");
    std::fs::write(&labels, "place\n\n").unwrap();
    let out = graphrule(&[
        "convert", "--from", "conllu", "--input", s(&input), "--labels", s(&labels), "--output", s(&converted),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["rows"], 2);
    let first: Value = serde_json::from_str(std::fs::read_to_string(&converted).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["labels"], json!(["place"]));

    let out = graphrule(&["convert", "--from", "conllu", "--to", "tsv", "--input", s(&input)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn refine_apply_rewrites_the_rules_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_corpus(dir.path(), 3, 500);
    let rules = dir.path().join("rules.json");
    std::fs::write(
        &rules,
        json!({"classes": {CLASS: [{"clauses": [{"penman": graphrule_core::testkit::REGEX_VARIANT}]}]}}).to_string(),
    )
    .unwrap();
    let args = ["refine", "--rules", s(&rules), "--dataset", s(&data), "--class", CLASS, "--rule-index", "0", "--node", "u_2"];
    let preview = graphrule(&args);
    assert_eq!(preview.status.code(), Some(0), "{}", String::from_utf8_lossy(&preview.stderr));
    let preview = stdout_json(&preview);
    assert_eq!(preview["applied"], false);
    let mut apply = args.to_vec();
    apply.push("--apply");
    let out = graphrule(&apply);
    assert_eq!(out.status.code(), Some(0));
    let saved = std::fs::read_to_string(&rules).unwrap();
    assert!(saved.contains(preview["refined_penman"].as_str().unwrap()), "{saved}");
    // refining the alternation again keeps it
    let again = graphrule(&args);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(stdout_json(&again)["refined_penman"], preview["refined_penman"]);
    let literal = dir.path().join("literal.json");
    std::fs::write(&literal, json!({"classes": {CLASS: [{"clauses": [{"penman": PLANTED_EDGE}]}]}}).to_string()).unwrap();
    let mut on_literal = args.to_vec();
    on_literal[2] = s(&literal);
    assert_eq!(graphrule(&on_literal).status.code(), Some(2));
}

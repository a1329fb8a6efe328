use graphrule_core::rules::{evaluate_rows, EvalRow, Rule, RuleSystem};
use graphrule_core::{parse_penman, LabeledGraph, Pattern};
use std::collections::BTreeSet;

const TOL: f64 = 0.0005;

/// Rows whose gold/match status yields the requested confusion counts for
/// the rule `into -2-> entity2`.
fn fixture(tp: usize, fp: usize, fn_: usize, tn: usize) -> (Vec<LabeledGraph>, Vec<BTreeSet<String>>) {
    let hit = parse_penman("(i / into :2 (e / entity2))").unwrap();
    let miss = parse_penman("(i / into :1 (e / entity2))").unwrap();
    let pos = BTreeSet::from(["entity-destination".to_owned()]);
    let mut graphs = Vec::new();
    let mut labels = Vec::new();
    for (n, g, l) in [(tp, &hit, &pos), (fp, &hit, &BTreeSet::new()), (fn_, &miss, &pos), (tn, &miss, &BTreeSet::new())] {
        for _ in 0..n {
            graphs.push(g.clone());
            labels.push(l.clone());
        }
    }
    (graphs, labels)
}

fn precision_recall(tp: usize, fp: usize, fn_: usize, tn: usize) -> (f64, f64, usize, usize) {
    let (graphs, labels) = fixture(tp, fp, fn_, tn);
    let rows: Vec<EvalRow> = graphs
        .iter()
        .zip(&labels)
        .enumerate()
        .map(|(i, (graph, labels))| EvalRow { id: i as u64, graph, labels })
        .collect();
    let mut rs = RuleSystem::new();
    rs.add_rule(Rule::single("entity-destination", Pattern::parse("(u_1 / into :2 (u_2 / entity2))").unwrap()));
    let report = evaluate_rows(&rs, "entity-destination", &rows);
    assert_eq!(report.per_rule[0].metrics, report.aggregate);
    let m = report.aggregate;
    (m.precision, m.recall, m.tp, m.fp)
}

#[test]
fn lexical_rule_precision() {
    let (p, _, tp, fp) = precision_recall(266, 46, 100, 25);
    assert_eq!((tp, fp), (266, 46));
    assert!((p - 0.853).abs() < TOL, "{p}");
}

#[test]
fn refined_rule_precision() {
    let (p, _, tp, fp) = precision_recall(138, 1, 10, 25);
    assert_eq!((tp, fp), (138, 1));
    assert!((p - 0.9928).abs() < TOL, "{p}");
}

#[test]
fn suggested_rule_precision_and_recall() {
    // 407 / (407 + 241) = 0.628
    let (p, r, tp, fp) = precision_recall(407, 127, 241, 25);
    assert_eq!((tp, fp), (407, 127));
    assert!((p - 0.762).abs() < TOL, "{p}");
    assert!((r - 0.628).abs() < TOL, "{r}");
}

#[test]
fn zero_denominators_give_zero() {
    let (p, r, _, _) = precision_recall(0, 0, 0, 0);
    assert_eq!((p, r), (0.0, 0.0));
}

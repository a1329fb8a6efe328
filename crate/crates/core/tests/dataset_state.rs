use graphrule_core::dataset::{
    assign_splits, load_state, parse_dataset, save_rules, save_state, Split, RULES_FILE,
};
use graphrule_core::rules::RuleSystem;
use graphrule_core::testkit::{random_rule_system, synthetic_corpus, to_jsonl, PLANTED_EDGE, SYNTH_CLASS};
use graphrule_core::{Dataset, DatasetFormat, LoadOptions, Pattern, Rule};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;
use std::collections::BTreeSet;
use std::io::Write;
use std::sync::Arc;

fn corpus(seed: u64, n: usize) -> Dataset {
    let text = to_jsonl(&synthetic_corpus(&mut StdRng::seed_from_u64(seed), n));
    parse_dataset(&text, None, &LoadOptions::new(DatasetFormat::Jsonl)).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_deterministic(ids in proptest::collection::btree_set(any::<u64>(), 0..300), seed in any::<u64>()) {
        let ids: Vec<u64> = ids.into_iter().collect();
        let a = assign_splits(&ids, seed);
        let mut reversed = ids.clone();
        reversed.reverse();
        prop_assert_eq!(&a, &assign_splits(&reversed, seed));
        let train = a.values().filter(|&&s| s == Split::Train).count();
        prop_assert_eq!(train, (ids.len() as f64 * 0.8).round() as usize);
    }

    #[test]
    fn save_load_reproduces_state(seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = StdRng::seed_from_u64(seed);
        let mut rs = random_rule_system(&mut rng, 2, 3, 2);
        rs.add_rule(Rule::single(SYNTH_CLASS, Pattern::parse(PLANTED_EDGE).unwrap()));
        let d = corpus(seed, 60);
        save_state(dir.path(), &rs, Some(&d)).unwrap();
        let saved = load_state(dir.path()).unwrap();
        prop_assert_eq!(&saved.rules, &rs);
        prop_assert_eq!(saved.rules.to_json(), rs.to_json());
        let mut fresh = corpus(seed, 60);
        fresh.apply_annotations(saved.annotations.as_ref().unwrap()).unwrap();
        prop_assert_eq!(&fresh, &d);
        for split in [Split::Train, Split::Val] {
            prop_assert_eq!(
                fresh.evaluate(&saved.rules, SYNTH_CLASS, split).ok(),
                d.evaluate(&rs, SYNTH_CLASS, split).ok()
            );
        }
    }
}

#[test]
fn eighty_twenty_on_eight_thousand_rows() {
    let d = corpus(11, 8000);
    assert_eq!((d.split_len(Split::Train), d.split_len(Split::Val)), (6400, 1600));
    let again = corpus(11, 8000);
    assert_eq!(d, again);
}

#[test]
fn concurrent_saves_never_tear() {
    let dir = tempfile::tempdir().unwrap();
    let path = Arc::new(dir.path().join(RULES_FILE));
    let systems: Arc<Vec<RuleSystem>> = Arc::new(
        (0..4u64)
            .map(|s| {
                let mut rs = random_rule_system(&mut StdRng::seed_from_u64(s), 3, 4, 3);
                rs.add_rule(Rule::single(format!("writer{s}"), Pattern::parse(PLANTED_EDGE).unwrap()));
                rs
            })
            .collect(),
    );
    save_rules(&path, &systems[0]).unwrap();
    let expected: Arc<BTreeSet<String>> = Arc::new(systems.iter().map(|s| s.to_json()).collect());

    let mut handles = Vec::new();
    for w in 0..4 {
        let (path, systems) = (Arc::clone(&path), Arc::clone(&systems));
        handles.push(std::thread::spawn(move || {
            for _ in 0..50 {
                save_rules(&path, &systems[w]).unwrap();
            }
        }));
    }
    let reader = {
        let (path, expected) = (Arc::clone(&path), Arc::clone(&expected));
        std::thread::spawn(move || {
            for _ in 0..200 {
                let text = std::fs::read_to_string(&*path).unwrap();
                assert!(expected.contains(text.trim_end()), "torn read");
            }
        })
    };
    for h in handles {
        h.join().unwrap();
    }
    reader.join().unwrap();
    let last = std::fs::read_to_string(&*path).unwrap();
    assert!(expected.contains(last.trim_end()));
    // only the target file is left behind
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn interrupted_write_leaves_previous_state() {
    let dir = tempfile::tempdir().unwrap();
    let mut rs = RuleSystem::new();
    rs.add_rule(Rule::single(SYNTH_CLASS, Pattern::parse(PLANTED_EDGE).unwrap()));
    save_state(dir.path(), &rs, None).unwrap();

    // a writer that dies after a partial write to its temporary file
    let mut tmp = tempfile::NamedTempFile::new_in(dir.path()).unwrap();
    tmp.write_all(&rs.to_json().as_bytes()[..10]).unwrap();
    drop(tmp);

    assert_eq!(load_state(dir.path()).unwrap().rules, rs);
}

#[test]
fn unknown_schema_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(RULES_FILE), r#"{"schema_version": 99, "classes": {}}"#).unwrap();
    let err = load_state(dir.path()).unwrap_err();
    assert!(err.to_string().contains("99"), "{err}");
}

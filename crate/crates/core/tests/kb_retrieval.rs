mod common;

use common::{oracle_retrieve, random_query, random_store};
use mobile_agent::kb::{KnowledgeBase, PersistError};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn ids(kb: &KnowledgeBase, q: &mobile_agent::kb::RetrievalQuery) -> Vec<String> {
    kb.retrieve(q).into_iter().map(|d| d.doc_id.clone()).collect()
}

#[test]
fn indexed_retrieval_matches_linear_scan() {
    let kb = random_store(11, 1000);
    let mut rng = StdRng::seed_from_u64(12);
    for _ in 0..200 {
        let q = random_query(&mut rng);
        assert_eq!(ids(&kb, &q), oracle_retrieve(&kb, &q), "{q:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn retrieval_equivalence(seed in any::<u64>(), n in 0usize..300, qseed in any::<u64>()) {
        let kb = random_store(seed, n);
        let mut rng = StdRng::seed_from_u64(qseed);
        for _ in 0..10 {
            let q = random_query(&mut rng);
            prop_assert_eq!(ids(&kb, &q), oracle_retrieve(&kb, &q));
        }
    }

    #[test]
    fn rid_match_dominates(seed in any::<u64>(), qseed in any::<u64>()) {
        let kb = random_store(seed, 200);
        let mut rng = StdRng::seed_from_u64(qseed);
        let q = random_query(&mut rng);
        if let Some(rid) = &q.resource_id {
            let any_match = kb.documents().any(|d| d.app_id == q.app_id && d.resource_id.as_ref() == Some(rid));
            if any_match {
                for d in kb.retrieve(&q) {
                    prop_assert_eq!(d.resource_id.as_ref(), Some(rid));
                }
            }
        }
    }

    #[test]
    fn jsonl_round_trip(seed in any::<u64>(), n in 0usize..120) {
        let kb = random_store(seed, n);
        let text = kb.to_jsonl();
        let back = KnowledgeBase::from_jsonl(&text).unwrap();
        prop_assert_eq!(&back, &kb);
        prop_assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn corrupting_any_line_aborts_the_load(seed in any::<u64>(), n in 1usize..60, pick in any::<prop::sample::Index>()) {
        let kb = random_store(seed, n);
        let mut lines: Vec<String> = kb.to_jsonl().lines().map(str::to_string).collect();
        let i = pick.index(lines.len());
        let half = lines[i].len() / 2;
        lines[i].truncate(half);
        match KnowledgeBase::from_jsonl(&lines.join("\n")) {
            Err(PersistError::CorruptLine { line, .. }) => prop_assert_eq!(line, i + 1),
            other => prop_assert!(false, "expected CorruptLine, got {:?}", other.map(|k| k.len())),
        }
    }

    #[test]
    fn upserts_never_shrink_counts(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut kb = KnowledgeBase::new();
        for _ in 0..80 {
            let d = common::random_doc(&mut rng);
            let id = mobile_agent::kb::doc_id(&d.app_id, &d.screen_signature, &d.element_key);
            let before = kb.get(&id).map(|x| (x.visit_count, x.history.len()));
            kb.upsert(d).unwrap();
            let after = kb.get(&id).unwrap();
            if let Some((v, h)) = before {
                prop_assert_eq!(after.visit_count, v + 1);
                prop_assert!(after.history.len() >= h);
            }
            prop_assert!(after.updated_at >= after.created_at);
        }
    }
}

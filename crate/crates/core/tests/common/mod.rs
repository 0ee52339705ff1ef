#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use mobile_agent::action::ActionKind;
use mobile_agent::kb::{embed, ElementDocument, KnowledgeBase, RetrievalQuery, UselessRecord};
use mobile_agent::ui::{Bounds, ElementSource};
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn suite_path() -> PathBuf {
    fixtures().join("suite/suite.json")
}

const WORDS: &[&str] = &[
    "send", "message", "button", "open", "compose", "note", "title", "search", "contact", "delete",
    "archive", "settings", "dark", "theme", "wifi", "toggle", "alarm", "save", "cart", "menu",
];
const APPS: &[&str] = &["notes", "mail", "shop"];
const KINDS: &[ActionKind] = &[ActionKind::Tap, ActionKind::LongPress, ActionKind::Swipe, ActionKind::Text];

fn phrase(rng: &mut StdRng, max: usize) -> String {
    let n = rng.random_range(0..=max);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

pub fn random_doc(rng: &mut StdRng) -> ElementDocument {
    let app = *APPS.choose(rng).unwrap();
    let rid = rng.random_bool(0.7).then(|| format!("{app}:id/e{}", rng.random_range(0..40)));
    let key = match &rid {
        Some(r) => format!("rid:{r}"),
        None => format!("txt:{}", rng.random_range(0..40)),
    };
    let t = rng.random_range(1..50u64);
    let mut functionality = phrase(rng, 4);
    if functionality.is_empty() {
        functionality = "does something".into();
    }
    let x = rng.random_range(0..500);
    ElementDocument {
        doc_id: String::new(),
        app_id: app.into(),
        screen_signature: format!("sig{}", rng.random_range(0..4)),
        element_key: key,
        resource_id: rid,
        labels_seen: (0..rng.random_range(0..3)).map(|_| rng.random_range(1..20)).collect(),
        text: rng.random_bool(0.5).then(|| phrase(rng, 2)),
        visual_desc: rng.random_bool(0.2).then(|| phrase(rng, 2)),
        coordinates: Bounds::new(x, x, x + 10, x + 20).unwrap(),
        functionality,
        action_kinds: BTreeSet::from([*KINDS.choose(rng).unwrap()]),
        source: if rng.random_bool(0.8) { ElementSource::Parser } else { ElementSource::OcrText },
        visit_count: 1,
        created_at: t,
        updated_at: t + rng.random_range(0..3),
        history: Vec::new(),
    }
}

pub fn random_useless(rng: &mut StdRng) -> UselessRecord {
    UselessRecord {
        app_id: (*APPS.choose(rng).unwrap()).into(),
        screen_signature: format!("sig{}", rng.random_range(0..4)),
        element_key: format!("rid:x:id/e{}", rng.random_range(0..10)),
        action_kind: *KINDS.choose(rng).unwrap(),
        recorded_at: rng.random_range(0..100),
    }
}

/// Store built from `n` random upserts (some merge) and a few useless records.
pub fn random_store(seed: u64, n: usize) -> KnowledgeBase {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut kb = KnowledgeBase::new();
    for _ in 0..n {
        kb.upsert(random_doc(&mut rng)).unwrap();
    }
    for _ in 0..n / 10 {
        kb.record_useless(random_useless(&mut rng));
    }
    kb
}

pub fn random_query(rng: &mut StdRng) -> RetrievalQuery {
    let app = *APPS.choose(rng).unwrap();
    RetrievalQuery {
        app_id: app.into(),
        resource_id: rng
            .random_bool(0.5)
            .then(|| format!("{app}:id/e{}", rng.random_range(0..60))),
        query_text: phrase(rng, 4),
        k: rng.random_range(1..8),
    }
}

/// Linear scan over every document: filter by app, narrow to exact
/// resource-id matches when there are any, score by cosine, sort by
/// (score desc, updated_at desc, doc_id asc).
pub fn oracle_retrieve(kb: &KnowledgeBase, q: &RetrievalQuery) -> Vec<String> {
    let in_app: Vec<&ElementDocument> = kb.documents().filter(|d| d.app_id == q.app_id).collect();
    let by_rid: Vec<&ElementDocument> = match &q.resource_id {
        Some(r) => in_app.iter().copied().filter(|d| d.resource_id.as_ref() == Some(r)).collect(),
        None => Vec::new(),
    };
    let cands = if by_rid.is_empty() { in_app } else { by_rid };
    let qv = embed(&q.query_text);
    let mut scored: Vec<(f64, u64, String)> = cands
        .into_iter()
        .map(|d| {
            let mut text = d.functionality.clone();
            if let Some(t) = &d.text {
                text = format!("{text} {t}");
            }
            if let Some(v) = &d.visual_desc {
                text = format!("{text} {v}");
            }
            let dv = embed(&text);
            let score: f64 = qv.0.iter().zip(&dv.0).map(|(a, b)| a * b).sum();
            (score, d.updated_at, d.doc_id.clone())
        })
        .collect();
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(b.1.cmp(&a.1))
            .then(a.2.cmp(&b.2))
    });
    scored.into_iter().take(q.k).map(|(_, _, id)| id).collect()
}

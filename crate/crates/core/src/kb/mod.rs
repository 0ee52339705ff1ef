//! Structured element knowledge base: one document per (app, screen,
//! element), two-stage self-query retrieval, and the useless list.

mod embed;
mod persist;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::action::ActionKind;
use crate::hash::fnv1a64_hex;
use crate::ui::{Bounds, ElementSource, UiElement};

pub use embed::{embed, tokenize, Embedder, Embedding, HashEmbedder, EMBED_DIM};
pub use persist::PersistError;

pub const DEFAULT_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementDocument {
    pub doc_id: String,
    pub app_id: String,
    pub screen_signature: String,
    pub element_key: String,
    pub resource_id: Option<String>,
    pub labels_seen: BTreeSet<u32>,
    pub text: Option<String>,
    pub visual_desc: Option<String>,
    pub coordinates: Bounds,
    pub functionality: String,
    pub action_kinds: BTreeSet<ActionKind>,
    pub source: ElementSource,
    pub visit_count: u32,
    pub created_at: u64,
    pub updated_at: u64,
    pub history: Vec<String>,
}

impl ElementDocument {
    /// New document describing `element` as seen on a screen.
    pub fn from_element(
        app_id: &str,
        screen_signature: &str,
        element: &UiElement,
        functionality: &str,
        kind: ActionKind,
        now: u64,
    ) -> Self {
        let element_key = element.key();
        Self {
            doc_id: doc_id(app_id, screen_signature, &element_key),
            app_id: app_id.to_string(),
            screen_signature: screen_signature.to_string(),
            element_key,
            resource_id: element.resource_id().map(str::to_string),
            labels_seen: element.label.into_iter().collect(),
            text: element
                .text()
                .or(element.content_desc())
                .map(str::to_string),
            visual_desc: element.visual_desc().map(str::to_string),
            coordinates: element.bounds,
            functionality: functionality.trim().to_string(),
            action_kinds: BTreeSet::from([kind]),
            source: element.source,
            visit_count: 1,
            created_at: now,
            updated_at: now,
            history: Vec::new(),
        }
    }

    /// Text embedded for similarity ranking.
    pub fn search_text(&self) -> String {
        let mut s = self.functionality.clone();
        for extra in [&self.text, &self.visual_desc].into_iter().flatten() {
            s.push(' ');
            s.push_str(extra);
        }
        s
    }

    fn validate(&self) -> Result<(), KbError> {
        let bad = |why: &str| Err(KbError::InvalidDocument(format!("{}: {why}", self.element_key)));
        if self.element_key.is_empty() {
            return bad("empty element_key");
        }
        if self.app_id.is_empty() {
            return bad("empty app_id");
        }
        if self.functionality.trim().is_empty() {
            return bad("empty functionality");
        }
        if self.visit_count < 1 {
            return bad("visit_count below 1");
        }
        if self.updated_at < self.created_at {
            return bad("updated_at before created_at");
        }
        if let Some(k) = self.action_kinds.iter().find(|k| !k.targets_element()) {
            return bad(&format!("{k} does not act on an element"));
        }
        Ok(())
    }
}

/// Identity hash of (app, screen, element).
pub fn doc_id(app_id: &str, screen_signature: &str, element_key: &str) -> String {
    fnv1a64_hex(&format!("{app_id}|{screen_signature}|{element_key}"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UselessRecord {
    pub app_id: String,
    pub screen_signature: String,
    pub element_key: String,
    pub action_kind: ActionKind,
    pub recorded_at: u64,
}

type UselessKey = (String, String, String, ActionKind);

impl UselessRecord {
    fn key(&self) -> UselessKey {
        (
            self.app_id.clone(),
            self.screen_signature.clone(),
            self.element_key.clone(),
            self.action_kind,
        )
    }
}

impl fmt::Display for UselessRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} on {}", self.action_kind, self.element_key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetrievalQuery {
    pub app_id: String,
    pub resource_id: Option<String>,
    pub query_text: String,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpsertOutcome {
    Created,
    Merged,
}

#[derive(Debug, thiserror::Error)]
pub enum KbError {
    #[error("InvalidDocument: {0}")]
    InvalidDocument(String),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

/// In-memory store with per-app and per-resource-id indexes and cached
/// document embeddings.
#[derive(Clone)]
pub struct KnowledgeBase {
    docs: BTreeMap<String, ElementDocument>,
    vectors: HashMap<String, Embedding>,
    by_app: HashMap<String, BTreeSet<String>>,
    by_rid: HashMap<(String, String), BTreeSet<String>>,
    useless: BTreeMap<UselessKey, UselessRecord>,
    embedder: Arc<dyn Embedder>,
}

impl fmt::Debug for KnowledgeBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KnowledgeBase")
            .field("docs", &self.docs.len())
            .field("useless", &self.useless.len())
            .finish()
    }
}

impl Default for KnowledgeBase {
    fn default() -> Self {
        Self::with_embedder(Arc::new(HashEmbedder))
    }
}

impl PartialEq for KnowledgeBase {
    fn eq(&self, other: &Self) -> bool {
        self.docs == other.docs && self.useless == other.useless
    }
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_embedder(embedder: Arc<dyn Embedder>) -> Self {
        Self {
            docs: BTreeMap::new(),
            vectors: HashMap::new(),
            by_app: HashMap::new(),
            by_rid: HashMap::new(),
            useless: BTreeMap::new(),
            embedder,
        }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty() && self.useless.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&ElementDocument> {
        self.docs.get(doc_id)
    }

    /// Documents in doc_id order.
    pub fn documents(&self) -> impl Iterator<Item = &ElementDocument> {
        self.docs.values()
    }

    /// All useless records ordered by (recorded_at, identity).
    pub fn useless_records(&self) -> Vec<&UselessRecord> {
        let mut v: Vec<&UselessRecord> = self.useless.values().collect();
        v.sort_by(|a, b| a.recorded_at.cmp(&b.recorded_at).then_with(|| a.key().cmp(&b.key())));
        v
    }

    pub fn upsert(&mut self, mut doc: ElementDocument) -> Result<UpsertOutcome, KbError> {
        doc.validate()?;
        doc.doc_id = doc_id(&doc.app_id, &doc.screen_signature, &doc.element_key);
        let Some(existing) = self.docs.get(&doc.doc_id).cloned() else {
            self.index(doc);
            return Ok(UpsertOutcome::Created);
        };
        let mut merged = existing;
        merged.visit_count = merged.visit_count.saturating_add(1);
        if merged.functionality != doc.functionality {
            let old = std::mem::replace(&mut merged.functionality, doc.functionality);
            merged.history.push(old);
        }
        merged.coordinates = doc.coordinates;
        merged.labels_seen.extend(doc.labels_seen);
        merged.action_kinds.extend(doc.action_kinds);
        merged.resource_id = doc.resource_id.or(merged.resource_id);
        merged.text = doc.text.or(merged.text);
        merged.visual_desc = doc.visual_desc.or(merged.visual_desc);
        merged.source = doc.source;
        merged.updated_at = merged.updated_at.max(doc.updated_at);
        self.unindex(&merged.doc_id);
        self.index(merged);
        Ok(UpsertOutcome::Merged)
    }

    fn index(&mut self, doc: ElementDocument) {
        let id = doc.doc_id.clone();
        self.vectors.insert(id.clone(), self.embedder.embed(&doc.search_text()));
        self.by_app.entry(doc.app_id.clone()).or_default().insert(id.clone());
        if let Some(rid) = &doc.resource_id {
            self.by_rid
                .entry((doc.app_id.clone(), rid.clone()))
                .or_default()
                .insert(id.clone());
        }
        self.docs.insert(id, doc);
    }

    fn unindex(&mut self, id: &str) {
        let Some(doc) = self.docs.remove(id) else { return };
        self.vectors.remove(id);
        if let Some(set) = self.by_app.get_mut(&doc.app_id) {
            set.remove(id);
        }
        if let Some(rid) = doc.resource_id {
            if let Some(set) = self.by_rid.get_mut(&(doc.app_id, rid)) {
                set.remove(id);
            }
        }
    }

    /// Records a useless (screen, element, action); returns false when the
    /// identical record was already present, in which case the first one is
    /// kept.
    pub fn record_useless(&mut self, r: UselessRecord) -> bool {
        let key = r.key();
        if self.useless.contains_key(&key) {
            return false;
        }
        self.useless.insert(key, r);
        true
    }

    pub fn useless_for(&self, app_id: &str, screen_signature: &str) -> Vec<&UselessRecord> {
        let mut v: Vec<&UselessRecord> = self
            .useless
            .values()
            .filter(|r| r.app_id == app_id && r.screen_signature == screen_signature)
            .collect();
        v.sort_by(|a, b| a.recorded_at.cmp(&b.recorded_at).then_with(|| a.key().cmp(&b.key())));
        v
    }

    pub fn retrieve(&self, q: &RetrievalQuery) -> Vec<&ElementDocument> {
        self.retrieve_scored(q).into_iter().map(|(_, d)| d).collect()
    }

    /// Ranked documents with their cosine scores.
    pub fn retrieve_scored(&self, q: &RetrievalQuery) -> Vec<(f64, &ElementDocument)> {
        if q.k == 0 {
            return Vec::new();
        }
        let rid_hits = q
            .resource_id
            .as_ref()
            .and_then(|rid| self.by_rid.get(&(q.app_id.clone(), rid.clone())))
            .filter(|s| !s.is_empty());
        let Some(candidates) = rid_hits.or_else(|| self.by_app.get(&q.app_id)) else {
            return Vec::new();
        };
        let qv = self.embedder.embed(&q.query_text);
        let mut scored: Vec<(f64, &ElementDocument)> = candidates
            .iter()
            .map(|id| (qv.cosine(&self.vectors[id]), &self.docs[id]))
            .collect();
        scored.sort_by(|(sa, a), (sb, b)| {
            sb.total_cmp(sa)
                .then_with(|| b.updated_at.cmp(&a.updated_at))
                .then_with(|| a.doc_id.cmp(&b.doc_id))
        });
        scored.truncate(q.k);
        scored
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn element(rid: Option<&str>, text: &str) -> UiElement {
        let mut e = UiElement::new("android.widget.Button", Bounds::new(0, 0, 100, 100).unwrap());
        e.resource_id = rid.map(str::to_string);
        e.text = Some(text.to_string());
        e.clickable = true;
        e.label = Some(1);
        e
    }

    fn doc(rid: Option<&str>, text: &str, func: &str, at: u64) -> ElementDocument {
        ElementDocument::from_element("notes", "sig", &element(rid, text), func, ActionKind::Tap, at)
    }

    #[test]
    fn first_insert_creates() {
        let mut kb = KnowledgeBase::new();
        assert_eq!(kb.upsert(doc(Some("id/fab"), "New", "opens composer", 1)).unwrap(), UpsertOutcome::Created);
        let d = kb.documents().next().unwrap();
        assert_eq!(d.visit_count, 1);
        assert_eq!(d.element_key, "rid:id/fab");
    }

    #[test]
    fn merge_same_functionality_keeps_history() {
        let mut kb = KnowledgeBase::new();
        kb.upsert(doc(Some("id/fab"), "New", "opens composer", 1)).unwrap();
        assert_eq!(kb.upsert(doc(Some("id/fab"), "New", "opens composer", 5)).unwrap(), UpsertOutcome::Merged);
        let d = kb.documents().next().unwrap();
        assert_eq!((d.visit_count, d.history.len(), d.created_at, d.updated_at), (2, 0, 1, 5));
    }

    #[test]
    fn merge_new_functionality_grows_history() {
        let mut kb = KnowledgeBase::new();
        kb.upsert(doc(Some("id/fab"), "New", "opens composer", 1)).unwrap();
        let mut d2 = doc(Some("id/fab"), "New", "creates a note", 2);
        d2.action_kinds.insert(ActionKind::LongPress);
        d2.labels_seen = BTreeSet::from([4]);
        kb.upsert(d2).unwrap();
        let d = kb.documents().next().unwrap();
        assert_eq!(d.functionality, "creates a note");
        assert_eq!(d.history, vec!["opens composer".to_string()]);
        assert_eq!(d.action_kinds, BTreeSet::from([ActionKind::Tap, ActionKind::LongPress]));
        assert_eq!(d.labels_seen, BTreeSet::from([1, 4]));
    }

    #[test]
    fn invalid_documents_are_rejected() {
        let mut kb = KnowledgeBase::new();
        let mut d = doc(None, "x", "  ", 1);
        assert!(matches!(kb.upsert(d.clone()), Err(KbError::InvalidDocument(_))));
        d.functionality = "ok".into();
        d.action_kinds = BTreeSet::from([ActionKind::Back]);
        assert!(matches!(kb.upsert(d), Err(KbError::InvalidDocument(_))));
        assert!(kb.is_empty());
    }

    #[test]
    fn rid_match_wins_regardless_of_text() {
        let mut kb = KnowledgeBase::new();
        kb.upsert(doc(Some("id/x"), "alpha", "archive the note", 1)).unwrap();
        kb.upsert(doc(None, "send", "send message button", 1)).unwrap();
        let q = RetrievalQuery {
            app_id: "notes".into(),
            resource_id: Some("id/x".into()),
            query_text: "send message".into(),
            k: 3,
        };
        let hits = kb.retrieve(&q);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].resource_id.as_deref(), Some("id/x"));
    }

    #[test]
    fn empty_store_and_other_app_return_nothing() {
        let mut kb = KnowledgeBase::new();
        let q = RetrievalQuery { app_id: "notes".into(), resource_id: None, query_text: "x".into(), k: 3 };
        assert!(kb.retrieve(&q).is_empty());
        kb.upsert(doc(None, "x", "x", 1)).unwrap();
        let q = RetrievalQuery { app_id: "mail".into(), ..q };
        assert!(kb.retrieve(&q).is_empty());
    }

    #[test]
    fn useless_list_has_set_semantics() {
        let mut kb = KnowledgeBase::new();
        let r = UselessRecord {
            app_id: "notes".into(),
            screen_signature: "s1".into(),
            element_key: "rid:a".into(),
            action_kind: ActionKind::Tap,
            recorded_at: 3,
        };
        assert!(kb.record_useless(r.clone()));
        assert!(!kb.record_useless(UselessRecord { recorded_at: 9, ..r.clone() }));
        assert_eq!(kb.useless_for("notes", "s1"), vec![&r]);
        assert!(kb.useless_for("notes", "s2").is_empty());
    }
}

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{doc_id, ElementDocument, KnowledgeBase, UselessRecord};

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("IoError on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("CorruptLine({line}): {message}")]
    CorruptLine { line: usize, message: String },
}

#[allow(clippy::large_enum_variant)]
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Doc(ElementDocument),
    Useless(UselessRecord),
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LineRef<'a> {
    Doc(&'a ElementDocument),
    Useless(&'a UselessRecord),
}

fn io_err(path: &Path, source: std::io::Error) -> PersistError {
    PersistError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl KnowledgeBase {
    /// Canonical JSONL: documents by doc_id, then useless records by
    /// (recorded_at, identity).
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let lines = self
            .documents()
            .map(LineRef::Doc)
            .chain(self.useless_records().into_iter().map(LineRef::Useless));
        for line in lines {
            out.push_str(&serde_json::to_string(&line).expect("kb records serialize"));
            out.push('\n');
        }
        out
    }

    /// Parses a JSONL store. Blank lines are skipped; any bad line fails the
    /// whole load.
    pub fn from_jsonl(text: &str) -> Result<Self, PersistError> {
        let mut kb = KnowledgeBase::new();
        let mut seen_useless = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let corrupt = |message: String| PersistError::CorruptLine { line: n, message };
            match serde_json::from_str::<Line>(raw).map_err(|e| corrupt(e.to_string()))? {
                Line::Doc(d) => {
                    d.validate().map_err(|e| corrupt(e.to_string()))?;
                    let expected = doc_id(&d.app_id, &d.screen_signature, &d.element_key);
                    if d.doc_id != expected {
                        return Err(corrupt(format!("doc_id {} does not match its identity", d.doc_id)));
                    }
                    if kb.get(&d.doc_id).is_some() {
                        return Err(corrupt(format!("duplicate document {}", d.doc_id)));
                    }
                    kb.index(d);
                }
                Line::Useless(r) => {
                    if !seen_useless.insert(r.key()) {
                        return Err(corrupt(format!("duplicate useless record {r}")));
                    }
                    kb.record_useless(r);
                }
            }
        }
        Ok(kb)
    }

    pub fn load(path: &Path) -> Result<Self, PersistError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_jsonl(&text)
    }

    /// Loads `path`, or starts empty when the file does not exist yet.
    pub fn open(path: &Path) -> Result<Self, PersistError> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::new())
        }
    }

    /// Replaces this store's contents with `path`, leaving it untouched on
    /// any error.
    pub fn reload(&mut self, path: &Path) -> Result<(), PersistError> {
        let mut fresh = Self::load(path)?;
        fresh.embedder = self.embedder.clone();
        fresh.reindex();
        *self = fresh;
        Ok(())
    }

    fn reindex(&mut self) {
        let docs: Vec<ElementDocument> = std::mem::take(&mut self.docs).into_values().collect();
        self.vectors.clear();
        self.by_app.clear();
        self.by_rid.clear();
        for d in docs {
            self.index(d);
        }
    }

    /// Writes via a temporary sibling file and a rename.
    pub fn persist(&self, path: &Path) -> Result<(), PersistError> {
        let tmp = path.with_extension("jsonl.tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .and_then(|_| f.sync_all())
            .map_err(|e| io_err(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| io_err(path, e))
    }
}

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

pub const PLACEHOLDERS: &[&str] = &[
    "task",
    "elements",
    "documents",
    "memory",
    "history",
    "useless",
    "action_space",
    "before",
    "after",
    "action",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("MissingBinding({0:?})")]
    MissingBinding(String),
    #[error("unknown placeholder {{{name}}} at byte {at}")]
    UnknownPlaceholder { name: String, at: usize },
    #[error("unbalanced brace at byte {0}; write {{{{ or }}}} for a literal brace")]
    Unbalanced(usize),
    #[error("reading template {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateId {
    Exploration,
    Reflection,
    Task,
    ManualAnnotation,
}

impl TemplateId {
    pub const ALL: [TemplateId; 4] = [
        Self::Exploration,
        Self::Reflection,
        Self::Task,
        Self::ManualAnnotation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Exploration => "exploration",
            Self::Reflection => "reflection",
            Self::Task => "task",
            Self::ManualAnnotation => "manual_annotation",
        }
    }

    fn default_body(self) -> &'static str {
        match self {
            Self::Exploration => include_str!("../../templates/exploration.txt"),
            Self::Reflection => include_str!("../../templates/reflection.txt"),
            Self::Task => include_str!("../../templates/task.txt"),
            Self::ManualAnnotation => include_str!("../../templates/manual_annotation.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Literal(String),
    Slot(String),
}

/// A body with `{name}` placeholders. `{{` and `}}` are literal braces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pieces: Vec<Piece>,
}

impl PromptTemplate {
    pub fn new(id: TemplateId, body: &str) -> Result<Self, TemplateError> {
        let mut pieces = Vec::new();
        let mut lit = String::new();
        let bytes = body.as_bytes();
        let mut i = 0;
        while i < body.len() {
            let c = bytes[i];
            if c == b'{' && bytes.get(i + 1) == Some(&b'{') {
                lit.push('{');
                i += 2;
            } else if c == b'}' && bytes.get(i + 1) == Some(&b'}') {
                lit.push('}');
                i += 2;
            } else if c == b'{' {
                let close = body[i + 1..].find('}').ok_or(TemplateError::Unbalanced(i))?;
                let name = &body[i + 1..i + 1 + close];
                if !PLACEHOLDERS.contains(&name) {
                    return Err(TemplateError::UnknownPlaceholder {
                        name: name.to_string(),
                        at: i,
                    });
                }
                if !lit.is_empty() {
                    pieces.push(Piece::Literal(std::mem::take(&mut lit)));
                }
                pieces.push(Piece::Slot(name.to_string()));
                i += close + 2;
            } else if c == b'}' {
                return Err(TemplateError::Unbalanced(i));
            } else {
                let ch = body[i..].chars().next().expect("in bounds");
                lit.push(ch);
                i += ch.len_utf8();
            }
        }
        if !lit.is_empty() {
            pieces.push(Piece::Literal(lit));
        }
        Ok(Self { id, pieces })
    }

    pub fn default_for(id: TemplateId) -> Self {
        Self::new(id, id.default_body()).expect("bundled templates are valid")
    }

    /// Placeholder names in order of first use.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for p in &self.pieces {
            if let Piece::Slot(n) = p {
                if !out.contains(&n.as_str()) {
                    out.push(n);
                }
            }
        }
        out
    }

    /// Single-pass substitution: bound values are inserted verbatim and never
    /// rescanned. Unused bindings are ignored.
    pub fn render(&self, bindings: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
        let mut out = String::new();
        for p in &self.pieces {
            match p {
                Piece::Literal(s) => out.push_str(s),
                Piece::Slot(name) => out.push_str(
                    bindings
                        .get(name.as_str())
                        .ok_or_else(|| TemplateError::MissingBinding(name.clone()))?,
                ),
            }
        }
        Ok(out)
    }
}

/// The four prompt templates, defaulting to the bundled bodies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub exploration: PromptTemplate,
    pub reflection: PromptTemplate,
    pub task: PromptTemplate,
    pub manual_annotation: PromptTemplate,
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            exploration: PromptTemplate::default_for(TemplateId::Exploration),
            reflection: PromptTemplate::default_for(TemplateId::Reflection),
            task: PromptTemplate::default_for(TemplateId::Task),
            manual_annotation: PromptTemplate::default_for(TemplateId::ManualAnnotation),
        }
    }
}

impl Templates {
    /// Defaults, overridden by any `<id>.txt` present in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut t = Self::default();
        for id in TemplateId::ALL {
            let path = dir.join(format!("{id}.txt"));
            if !path.exists() {
                continue;
            }
            let body = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            *t.get_mut(id) = PromptTemplate::new(id, &body)?;
        }
        Ok(t)
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        match id {
            TemplateId::Exploration => &self.exploration,
            TemplateId::Reflection => &self.reflection,
            TemplateId::Task => &self.task,
            TemplateId::ManualAnnotation => &self.manual_annotation,
        }
    }

    fn get_mut(&mut self, id: TemplateId) -> &mut PromptTemplate {
        match id {
            TemplateId::Exploration => &mut self.exploration,
            TemplateId::Reflection => &mut self.reflection,
            TemplateId::Task => &mut self.task,
            TemplateId::ManualAnnotation => &mut self.manual_annotation,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(pairs: &[(&'static str, &str)]) -> BTreeMap<&'static str, String> {
        pairs.iter().map(|(k, v)| (*k, v.to_string())).collect()
    }

    #[test]
    fn substitutes() {
        let t = PromptTemplate::new(TemplateId::Task, "Do {task}").unwrap();
        assert_eq!(t.render(&b(&[("task", "X"), ("memory", "unused")])).unwrap(), "Do X");
    }

    #[test]
    fn missing_binding() {
        let t = PromptTemplate::new(TemplateId::Task, "Do {task}").unwrap();
        assert_eq!(t.render(&b(&[])), Err(TemplateError::MissingBinding("task".into())));
    }

    #[test]
    fn rejects_unknown_and_unbalanced() {
        assert!(matches!(
            PromptTemplate::new(TemplateId::Task, "{nope}"),
            Err(TemplateError::UnknownPlaceholder { .. })
        ));
        assert_eq!(PromptTemplate::new(TemplateId::Task, "a { b"), Err(TemplateError::Unbalanced(2)));
        assert_eq!(PromptTemplate::new(TemplateId::Task, "a } b"), Err(TemplateError::Unbalanced(2)));
    }

    #[test]
    fn doubled_braces_are_literal() {
        let t = PromptTemplate::new(TemplateId::Task, r#"{{"x": "{task}"}}"#).unwrap();
        assert_eq!(t.render(&b(&[("task", "1")])).unwrap(), r#"{"x": "1"}"#);
    }

    #[test]
    fn values_are_not_rescanned() {
        let t = PromptTemplate::new(TemplateId::Task, "{task}|{memory}").unwrap();
        let out = t.render(&b(&[("task", "{memory}"), ("memory", "m")])).unwrap();
        assert_eq!(out, "{memory}|m");
    }

    #[test]
    fn default_task_template_has_each_section_once() {
        let t = Templates::default();
        let all: BTreeMap<&str, String> = PLACEHOLDERS.iter().map(|p| (*p, format!("<{p}>"))).collect();
        let out = t.task.render(&all).unwrap();
        for header in [
            "## Task",
            "## Action Space",
            "## Current Screen Elements",
            "## Knowledge Base Documents",
            "## Memory",
            "## History",
        ] {
            assert_eq!(out.lines().filter(|l| l.trim() == header).count(), 1, "{header}");
        }
    }

    #[test]
    fn every_bundled_template_parses() {
        let t = Templates::default();
        for id in TemplateId::ALL {
            assert!(!t.get(id).placeholders().is_empty(), "{id}");
        }
    }

    #[test]
    fn directory_overrides_single_template() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("reflection.txt"), "R {action}").unwrap();
        let t = Templates::from_dir(dir.path()).unwrap();
        assert_eq!(t.reflection.render(&b(&[("action", "Back()")])).unwrap(), "R Back()");
        assert_eq!(t.task, Templates::default().task);
    }

    proptest! {
        #[test]
        fn render_is_injective_for_separated_slots(a in "\\PC{0,12}", b2 in "\\PC{0,12}", c in "\\PC{0,12}", d in "\\PC{0,12}") {
            prop_assume!(!a.contains('\u{1}') && !b2.contains('\u{1}') && !c.contains('\u{1}') && !d.contains('\u{1}'));
            let t = PromptTemplate::new(TemplateId::Task, "{task}\u{1}{memory}").unwrap();
            let r1 = t.render(&b(&[("task", &a), ("memory", &b2)])).unwrap();
            let r2 = t.render(&b(&[("task", &c), ("memory", &d)])).unwrap();
            prop_assert_eq!(r1 == r2, a == c && b2 == d);
        }

        #[test]
        fn arbitrary_bodies_never_panic(body in "\\PC{0,60}") {
            let _ = PromptTemplate::new(TemplateId::Task, &body);
        }
    }
}

use serde::{Deserialize, Serialize};

use crate::action::{parse_action, Action, ActionParseError};

/// Placeholder summary used when a reply has no `Summary:` field. The caller
/// replaces it with the summary carried from the previous round.
pub const PREVIOUS_SUMMARY: &str = "<previous summary>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnOutput {
    pub observation: String,
    pub thought: String,
    pub action: Action,
    pub summary: String,
    pub raw: String,
}

impl TurnOutput {
    pub fn summary_missing(&self) -> bool {
        self.summary == PREVIOUS_SUMMARY
    }

    /// Swaps the sentinel for `previous`; leaves a real summary untouched.
    pub fn with_previous_summary(mut self, previous: &str) -> Self {
        if self.summary_missing() && !previous.is_empty() {
            self.summary = previous.to_string();
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TurnError {
    #[error("NoAction: {}", match .error { Some(e) => e.to_string(), None => "reply has no Action: line".into() })]
    NoAction {
        error: Option<ActionParseError>,
        raw: String,
    },
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Field {
    Observation,
    Thought,
    Action,
    Summary,
}

const HEADERS: [(&str, Field); 4] = [
    ("observation", Field::Observation),
    ("thought", Field::Thought),
    ("action", Field::Action),
    ("summary", Field::Summary),
];

/// Splits `line` into a field header and the rest of the line, accepting
/// `Action:`, `ACTION:`, `**Action:**`, `**Action**:` and leading bullets.
fn header(line: &str) -> Option<(Field, &str)> {
    let mut s = line.trim_start();
    s = s.strip_prefix("- ").unwrap_or(s);
    s = s.trim_start_matches(['*', '_', '#', ' ']);
    for (name, field) in HEADERS {
        let Some(head) = s.get(..name.len()) else { continue };
        if !head.eq_ignore_ascii_case(name) {
            continue;
        }
        let after = s[name.len()..].trim_start_matches(['*', '_']);
        if let Some(rest) = after.strip_prefix(':') {
            let rest = rest.trim_start_matches(['*', '_']);
            return Some((field, rest));
        }
    }
    None
}

fn clean_action_line(field: &str) -> Option<&str> {
    field
        .lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty() && !l.starts_with("```"))
        .map(|l| l.trim_matches('`').trim())
        .find(|l| !l.is_empty())
}

pub fn parse_turn(raw: &str) -> Result<TurnOutput, TurnError> {
    let mut fields: [Option<String>; 4] = Default::default();
    let mut current: Option<usize> = None;
    for line in raw.lines() {
        if let Some((field, rest)) = header(line) {
            let idx = HEADERS.iter().position(|(_, f)| *f == field).expect("listed");
            if fields[idx].is_none() {
                fields[idx] = Some(rest.to_string());
                current = Some(idx);
            } else {
                current = None;
            }
            continue;
        }
        if let Some(idx) = current {
            let f = fields[idx].as_mut().expect("current field is open");
            f.push('\n');
            f.push_str(line);
        }
    }
    let [observation, thought, action, summary] = fields;
    let no_action = |error| TurnError::NoAction {
        error,
        raw: raw.to_string(),
    };
    let action_text = action.ok_or_else(|| no_action(None))?;
    let line = clean_action_line(&action_text)
        .ok_or_else(|| no_action(Some(ActionParseError::SyntaxError("empty Action field".into()))))?;
    let action = parse_action(line).map_err(|e| no_action(Some(e)))?;
    let summary = summary
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| PREVIOUS_SUMMARY.to_string());
    Ok(TurnOutput {
        observation: observation.map(|s| s.trim().to_string()).unwrap_or_default(),
        thought: thought.map(|s| s.trim().to_string()).unwrap_or_default(),
        action,
        summary,
        raw: raw.to_string(),
    })
}

use serde::{Deserialize, Serialize};

use crate::action::Action;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    NoChange,
    Error { kind: String },
}

impl Outcome {
    pub fn error(kind: impl Into<String>) -> Self {
        Self::Error { kind: kind.into() }
    }

    pub fn is_ineffective(&self) -> bool {
        !matches!(self, Self::Ok)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub round: u32,
    /// Absent when the reply carried no usable action.
    pub action: Option<Action>,
    pub outcome: Outcome,
}

impl HistoryEntry {
    pub fn render(&self) -> String {
        let action = self
            .action
            .as_ref()
            .map_or_else(|| "(no action)".to_string(), Action::render);
        match &self.outcome {
            Outcome::Ok => format!("Round {}: {action} -> ok", self.round),
            Outcome::NoChange => format!("Round {}: {action} -> screen did not change", self.round),
            Outcome::Error { kind } => {
                format!("Round {}: Previous action {action} failed: {kind}", self.round)
            }
        }
    }
}

/// What carries from one round's prompt to the next.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionMemory {
    pub last_summary: String,
    pub action_history: Vec<HistoryEntry>,
    pub current_app_history: Vec<String>,
}

impl SessionMemory {
    pub fn record(&mut self, entry: HistoryEntry) {
        self.action_history.push(entry);
    }

    /// Appends `app` unless it is already the latest entry.
    pub fn visit_app(&mut self, app: &str) {
        if self.current_app_history.last().map(String::as_str) != Some(app) {
            self.current_app_history.push(app.to_string());
        }
    }

    pub fn render_memory(&self) -> String {
        let summary = if self.last_summary.is_empty() {
            "(nothing yet)"
        } else {
            self.last_summary.as_str()
        };
        if self.current_app_history.is_empty() {
            summary.to_string()
        } else {
            format!("{summary}\nApps visited: {}", self.current_app_history.join(" -> "))
        }
    }

    pub fn render_history(&self) -> String {
        if self.action_history.is_empty() {
            return "(no actions yet)".to_string();
        }
        self.action_history
            .iter()
            .map(HistoryEntry::render)
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// True iff the last `window` outcomes are all no-change or errors.
pub fn should_fallback_visual(memory: &SessionMemory, window: usize) -> bool {
    let window = window.max(1);
    let h = &memory.action_history;
    h.len() >= window && h[h.len() - window..].iter().all(|e| e.outcome.is_ineffective())
}

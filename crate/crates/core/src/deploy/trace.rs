use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::memory::Outcome;
use crate::action::Gesture;
use crate::llm::TurnOutput;

/// One agent round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub round: u32,
    pub screen_before_sig: String,
    pub screen_after_sig: String,
    /// Elements on the before-screen, after any perception augmentation.
    pub element_count: usize,
    /// Absent when both the reply and its retry had no usable action.
    pub turn: Option<TurnOutput>,
    /// Absent for `Stop()`, unusable replies and actions that did not resolve.
    pub gesture: Option<Gesture>,
    pub outcome: Outcome,
    pub used_documents: Vec<String>,
    pub fallback_active: bool,
    pub safety_handoff: bool,
}

/// A manual takeover. Nothing seen or typed during it is kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandoffRecord {
    /// The agent round the handoff preceded.
    pub round: u32,
    pub safety_handoff: bool,
    pub commands_relayed: u32,
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceStep {
    Step(StepRecord),
    Handoff(HandoffRecord),
}

impl TraceStep {
    pub fn as_agent(&self) -> Option<&StepRecord> {
        match self {
            Self::Step(s) => Some(s),
            Self::Handoff(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminatedBy {
    StopAction,
    MaxRounds,
    Error,
}

impl fmt::Display for TerminatedBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::StopAction => "stop_action",
            Self::MaxRounds => "max_rounds",
            Self::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTrace {
    pub task_id: String,
    pub steps: Vec<TraceStep>,
    pub terminated_by: TerminatedBy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub final_goal_satisfied: Option<bool>,
    pub wall_rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Summary {
    task_id: String,
    terminated_by: TerminatedBy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    final_goal_satisfied: Option<bool>,
    wall_rounds: usize,
}

#[allow(clippy::large_enum_variant)]
#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Step(StepRecord),
    Handoff(HandoffRecord),
    Summary(Summary),
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("trace has no summary record")]
    MissingSummary,
    #[error("trace summary says {claimed} steps but {actual} are present")]
    Inconsistent { claimed: usize, actual: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl TaskTrace {
    pub fn agent_steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.steps.iter().filter_map(TraceStep::as_agent)
    }

    /// One record per step, then a summary record.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            let line = match s {
                TraceStep::Step(r) => Line::Step(r.clone()),
                TraceStep::Handoff(h) => Line::Handoff(*h),
            };
            out.push_str(&serde_json::to_string(&line).expect("trace records serialize"));
            out.push('\n');
        }
        let summary = Line::Summary(Summary {
            task_id: self.task_id.clone(),
            terminated_by: self.terminated_by,
            error: self.error.clone(),
            final_goal_satisfied: self.final_goal_satisfied,
            wall_rounds: self.wall_rounds,
        });
        out.push_str(&serde_json::to_string(&summary).expect("trace records serialize"));
        out.push('\n');
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TraceError> {
        let mut steps = Vec::new();
        let mut summary = None;
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            if summary.is_some() {
                return Err(TraceError::Line { line: i + 1, message: "record after summary".into() });
            }
            let line: Line = serde_json::from_str(raw).map_err(|e| TraceError::Line {
                line: i + 1,
                message: e.to_string(),
            })?;
            match line {
                Line::Step(r) => steps.push(TraceStep::Step(r)),
                Line::Handoff(h) => steps.push(TraceStep::Handoff(h)),
                Line::Summary(s) => summary = Some(s),
            }
        }
        let s = summary.ok_or(TraceError::MissingSummary)?;
        if s.wall_rounds != steps.len() {
            return Err(TraceError::Inconsistent { claimed: s.wall_rounds, actual: steps.len() });
        }
        Ok(Self {
            task_id: s.task_id,
            steps,
            terminated_by: s.terminated_by,
            error: s.error,
            final_goal_satisfied: s.final_goal_satisfied,
            wall_rounds: s.wall_rounds,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), TraceError> {
        std::fs::write(path, self.to_jsonl()).map_err(|source| TraceError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, TraceError> {
        let text = std::fs::read_to_string(path).map_err(|source| TraceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_jsonl(&text)
    }
}

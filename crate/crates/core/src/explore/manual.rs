use std::collections::BTreeMap;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::{ExplorationReport, ExploreAbort, ExploreError, ExploreSession};
use crate::action::ActionKind;
use crate::device::{Command, DeviceCommand, DeviceError};
use crate::kb::{ElementDocument, UpsertOutcome};
use crate::llm::ChatMessage;
use crate::ui::{Screen, UiElement};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManualEvent {
    Gesture { cmd: DeviceCommand, timestamp: u64 },
    EndSession { timestamp: u64 },
}

#[derive(Debug, thiserror::Error)]
pub enum ManualEventError {
    #[error("event line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("event line {line}: event after end of session")]
    AfterEnd { line: usize },
    #[error("event stream has no {{\"end\": true}} line")]
    MissingEnd,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EventLine {
    cmd: Option<String>,
    #[serde(default)]
    end: bool,
    #[serde(default)]
    ts: u64,
}

/// Parses JSON lines of `{"cmd": ...}` ending with `{"end": true}`. Blank
/// lines are skipped; an optional `ts` carries the event timestamp.
pub fn parse_manual_events(text: &str) -> Result<Vec<ManualEvent>, ManualEventError> {
    let mut out = Vec::new();
    let mut ended = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        if ended {
            return Err(ManualEventError::AfterEnd { line });
        }
        let ev: EventLine = serde_json::from_str(raw).map_err(|e| ManualEventError::Line {
            line,
            message: e.to_string(),
        })?;
        match (ev.cmd, ev.end) {
            (Some(cmd), false) => out.push(ManualEvent::Gesture {
                cmd: DeviceCommand::new(cmd),
                timestamp: ev.ts,
            }),
            (None, true) => {
                out.push(ManualEvent::EndSession { timestamp: ev.ts });
                ended = true;
            }
            _ => {
                return Err(ManualEventError::Line {
                    line,
                    message: "expected exactly one of \"cmd\" or \"end\": true".into(),
                })
            }
        }
    }
    if ended {
        Ok(out)
    } else {
        Err(ManualEventError::MissingEnd)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ManualOutcome {
    Documented { doc_id: String, created: bool },
    HitTestMiss { x: u32, y: u32 },
    /// Key events and sleeps, or text typed with nothing focused.
    NoElement,
    Rejected { error: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualLogEntry {
    pub index: u32,
    pub cmd: String,
    #[serde(flatten)]
    pub outcome: ManualOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualReport {
    #[serde(flatten)]
    pub report: ExplorationReport,
    pub log: Vec<ManualLogEntry>,
}

/// Topmost labeled element under the point.
fn labeled_hit(screen: &Screen, x: u32, y: u32) -> Option<&UiElement> {
    screen
        .elements
        .iter()
        .rev()
        .find(|e| e.label.is_some() && e.bounds.contains(x, y))
}

/// Replays demonstrated commands and documents each touched element from a
/// backend annotation. Human gestures are trusted: there is no reflection
/// step and nothing goes to the useless list.
pub fn record_manual(
    session: &mut ExploreSession<'_>,
    events: impl IntoIterator<Item = ManualEvent>,
) -> Result<ManualReport, ExploreAbort> {
    let mut report = ExplorationReport::default();
    let mut log = Vec::new();
    for ev in events {
        let ManualEvent::Gesture { cmd, .. } = ev else { break };
        report.rounds += 1;
        let index = report.rounds;
        match session.record_one(&cmd) {
            Ok(outcome) => {
                if matches!(outcome, ManualOutcome::Documented { created: true, .. }) {
                    report.docs_created += 1;
                }
                info!("manual {index}: {cmd} -> {outcome:?}");
                log.push(ManualLogEntry { index, cmd: cmd.to_string(), outcome });
            }
            Err(error) => return Err(ExploreAbort { error, rounds: Vec::new() }),
        }
    }
    Ok(ManualReport { report, log })
}

impl ExploreSession<'_> {
    fn record_one(&mut self, cmd: &DeviceCommand) -> Result<ManualOutcome, ExploreError> {
        let before = self.capture()?;
        let parsed = match cmd.parse() {
            Ok(c) => c,
            Err(e) => {
                warn!("rejected demonstrated command: {e}");
                return Ok(ManualOutcome::Rejected { error: e.to_string() });
            }
        };
        match self.device.execute(cmd) {
            Ok(_) => {}
            Err(e @ DeviceError::BadCommand(_)) => return Ok(ManualOutcome::Rejected { error: e.to_string() }),
            Err(e) => return Err(e.into()),
        }
        let after = self.capture()?;

        let (point, kind) = match parsed {
            Command::Tap { x, y } => (Some((x, y)), ActionKind::Tap),
            Command::Swipe { x1, y1, x2, y2, .. } if (x1, y1) == (x2, y2) => (Some((x1, y1)), ActionKind::LongPress),
            Command::Swipe { x1, y1, .. } => (Some((x1, y1)), ActionKind::Swipe),
            Command::Text(_) => (None, ActionKind::Text),
            Command::KeyBack | Command::KeyHome | Command::Sleep(_) | Command::Dump => {
                self.focused = None;
                return Ok(ManualOutcome::NoElement);
            }
        };
        let target = match point {
            Some((x, y)) => match labeled_hit(&before, x, y) {
                Some(el) => el.clone(),
                None => {
                    warn!("demonstrated {cmd} hit no element");
                    return Ok(ManualOutcome::HitTestMiss { x, y });
                }
            },
            None => {
                let focused = self.focused.as_deref();
                match before.elements.iter().find(|e| Some(e.key().as_str()) == focused) {
                    Some(el) => el.clone(),
                    None => return Ok(ManualOutcome::NoElement),
                }
            }
        };
        if kind == ActionKind::Tap && target.editable {
            self.focused = Some(target.key());
        }
        if after.app_id != before.app_id || !after.elements.iter().any(|e| Some(e.key()) == self.focused) {
            self.focused = None;
        }

        let bindings = BTreeMap::from([
            ("task", self.task.clone()),
            ("action", format!("{cmd} on {}", target.describe())),
            ("before", before.render_elements()),
            ("after", after.render_elements()),
            ("elements", before.render_elements()),
        ]);
        let prompt = self.templates.manual_annotation.render(&bindings)?;
        let reply = self
            .backend
            .complete(&[ChatMessage::user(prompt).with_image(after.screenshot_ref.clone())])?;
        let functionality = match reply.trim() {
            "" => target.describe(),
            r => r.to_string(),
        };
        let doc = ElementDocument::from_element(
            &before.app_id,
            &before.signature,
            &target,
            &functionality,
            kind,
            self.clock.now_ms(),
        );
        let doc_id = doc.doc_id.clone();
        let created = self.kb.upsert(doc)? == UpsertOutcome::Created;
        Ok(ManualOutcome::Documented { doc_id, created })
    }
}

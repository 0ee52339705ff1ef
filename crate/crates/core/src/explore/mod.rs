//! Knowledge-base construction: agent-driven exploration with reflection, and
//! a recorder that annotates human demonstrations.

mod manual;

use std::collections::BTreeMap;
use std::fmt;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::action::{
    gesture_to_commands, resolve_with, Action, ActionKind, DeviceCommand, Gesture, ResolveConfig,
    TapTarget, ACTION_SPACE_DOC,
};
use crate::clock::Clock;
use crate::device::{capture_screen, DeviceController, DeviceError};
use crate::kb::{ElementDocument, KbError, KnowledgeBase, UpsertOutcome, UselessRecord};
use crate::llm::{request_turn, ChatBackend, ChatMessage, LlmError, TemplateError, TurnError, TurnOutput, Templates};
use crate::ui::{Screen, UiElement};

pub use manual::{
    parse_manual_events, record_manual, ManualEvent, ManualEventError, ManualLogEntry,
    ManualOutcome, ManualReport,
};

pub const DEFAULT_BUDGET: u32 = 20;

/// Element key used in useless records for actions that target no element.
pub const SCREEN_KEY: &str = "screen";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerdictKind {
    Effective,
    Irrelevant,
    NoChange,
}

impl VerdictKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Effective => "EFFECTIVE",
            Self::Irrelevant => "IRRELEVANT",
            Self::NoChange => "NO_CHANGE",
        }
    }
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionVerdict {
    pub kind: VerdictKind,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplorationRound {
    pub index: u32,
    pub before: Screen,
    pub action: Action,
    pub gesture: Option<Gesture>,
    pub after: Screen,
    pub verdict: ReflectionVerdict,
    /// Present iff the verdict is EFFECTIVE and the action targets an element.
    pub document: Option<ElementDocument>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationReport {
    pub rounds: u32,
    pub docs_created: u32,
    pub useless_added: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum ExploreError {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error("{0} (after one retry)")]
    NoAction(TurnError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("app {0:?} has no launcher icon on the home screen")]
    NoLauncher(String),
    #[error("NonElementAction: {0} targets no element")]
    NonElementAction(String),
}

impl ExploreError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Device(e) => e.kind(),
            Self::Backend(e) => e.kind(),
            Self::NoAction(_) => "NoAction",
            Self::Kb(_) => "InvalidDocument",
            Self::Template(_) => "TemplateError",
            Self::NoLauncher(_) => "NoLauncher",
            Self::NonElementAction(_) => "NonElementAction",
        }
    }
}

/// A session error plus the rounds completed before it.
#[derive(thiserror::Error)]
#[error("exploration aborted after {} rounds: {error}", rounds.len())]
pub struct ExploreAbort {
    pub error: ExploreError,
    pub rounds: Vec<ExplorationRound>,
}

impl fmt::Debug for ExploreAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExploreAbort")
            .field("error", &self.error)
            .field("rounds_completed", &self.rounds.len())
            .finish()
    }
}

#[derive(Debug, thiserror::Error)]
#[error("UnparsableVerdict: {0:?}")]
pub struct UnparsableVerdict(pub String);

/// Everything one exploration run borrows. Rounds run strictly in sequence.
pub struct ExploreSession<'a> {
    pub device: &'a mut dyn DeviceController,
    pub kb: &'a mut KnowledgeBase,
    pub backend: &'a mut dyn ChatBackend,
    pub templates: &'a Templates,
    pub clock: &'a dyn Clock,
    pub task: String,
    pub resolve: ResolveConfig,
    /// Key of the last editable element tapped; `Text` actions document it.
    focused: Option<String>,
    next_index: u32,
}

impl<'a> ExploreSession<'a> {
    pub fn new(
        device: &'a mut dyn DeviceController,
        kb: &'a mut KnowledgeBase,
        backend: &'a mut dyn ChatBackend,
        templates: &'a Templates,
        clock: &'a dyn Clock,
        task: impl Into<String>,
    ) -> Self {
        Self {
            device,
            kb,
            backend,
            templates,
            clock,
            task: task.into(),
            resolve: ResolveConfig::default(),
            focused: None,
            next_index: 1,
        }
    }

    fn capture(&mut self) -> Result<Screen, DeviceError> {
        let now = self.clock.now_ms();
        capture_screen(self.device, now)
    }

    fn exploration_prompt(&self, before: &Screen) -> Result<String, TemplateError> {
        let useless = self.kb.useless_for(&before.app_id, &before.signature);
        let useless = if useless.is_empty() {
            "(none)".to_string()
        } else {
            useless.iter().map(|r| format!("- {r}")).collect::<Vec<_>>().join("\n")
        };
        let bindings = BTreeMap::from([
            ("task", self.task.clone()),
            ("elements", before.render_elements()),
            ("useless", useless),
            ("action_space", ACTION_SPACE_DOC.to_string()),
        ]);
        self.templates.exploration.render(&bindings)
    }

    fn run_commands(&mut self, g: &Gesture) -> Result<(), DeviceError> {
        for cmd in gesture_to_commands(g) {
            self.device.execute(&cmd)?;
        }
        Ok(())
    }

    /// One explore, execute, reflect, document cycle.
    pub fn explore_round(&mut self) -> Result<(ExplorationRound, RoundEffects), ExploreError> {
        let index = self.next_index;
        self.next_index += 1;
        let before = self.capture()?;
        let prompt = self.exploration_prompt(&before)?;
        let turn = request_turn(self.backend, &prompt, before.screenshot_ref.as_deref())?
            .map_err(ExploreError::NoAction)?;
        let action = turn.action.clone();
        let mut effects = RoundEffects::default();

        if action == Action::Stop {
            let verdict = ReflectionVerdict {
                kind: VerdictKind::NoChange,
                rationale: "exploration stopped".into(),
            };
            let after = before.clone();
            return Ok((
                ExplorationRound { index, before, action, gesture: None, after, verdict, document: None },
                effects,
            ));
        }

        let (w, h) = self.device.screen_size();
        let gesture = match resolve_with(&action, &before, w, h, &self.resolve) {
            Ok(g) => g,
            Err(e) => {
                // Nothing was executed; there is no element to blame.
                warn!("round {index}: {action} did not resolve: {e}");
                let verdict = ReflectionVerdict {
                    kind: VerdictKind::NoChange,
                    rationale: format!("{} failed: {}", action, e.kind()),
                };
                let after = before.clone();
                return Ok((
                    ExplorationRound { index, before, action, gesture: None, after, verdict, document: None },
                    effects,
                ));
            }
        };
        let target = self.acted_element(&action, &before).cloned();
        self.run_commands(&gesture)?;
        if let Some(t) = &target {
            if action.kind() == ActionKind::Tap && t.editable {
                self.focused = Some(t.key());
            }
        }
        let after = self.capture()?;
        if after.app_id != before.app_id || !after.elements.iter().any(|e| Some(e.key()) == self.focused) {
            self.focused = None;
        }

        let verdict = match reflect(&before, &after, &action, &self.task, self.templates, self.backend)? {
            Ok(v) => v,
            Err(UnparsableVerdict(reply)) => ReflectionVerdict {
                kind: VerdictKind::Irrelevant,
                rationale: format!("unparsable verdict: {}", reply.trim()),
            },
        };
        info!("round {index}: {action} -> {}", verdict.kind);

        let mut document = None;
        let now = self.clock.now_ms();
        match verdict.kind {
            VerdictKind::Effective => {
                if let Some(el) = &target {
                    let doc = document_for(&before, el, &action, &verdict, &turn, now);
                    if self.kb.upsert(doc.clone())? == UpsertOutcome::Created {
                        effects.docs_created += 1;
                    }
                    document = Some(doc);
                }
            }
            VerdictKind::Irrelevant => {
                self.device.execute(&DeviceCommand::new("input keyevent KEYCODE_BACK"))?;
                effects.backs_issued += 1;
                effects.useless_added += self.mark_useless(&before, target.as_ref(), &action, now) as u32;
            }
            VerdictKind::NoChange => {
                effects.useless_added += self.mark_useless(&before, target.as_ref(), &action, now) as u32;
            }
        }
        Ok((
            ExplorationRound { index, before, action, gesture: Some(gesture), after, verdict, document },
            effects,
        ))
    }

    fn mark_useless(&mut self, before: &Screen, target: Option<&UiElement>, action: &Action, now: u64) -> bool {
        self.kb.record_useless(UselessRecord {
            app_id: before.app_id.clone(),
            screen_signature: before.signature.clone(),
            element_key: target.map_or_else(|| SCREEN_KEY.to_string(), UiElement::key),
            action_kind: action.kind(),
            recorded_at: now,
        })
    }

    fn acted_element<'s>(&self, action: &Action, before: &'s Screen) -> Option<&'s UiElement> {
        match action {
            Action::TapButton(TapTarget::Label(l)) | Action::LongPress(l) | Action::Swipe { label: l, .. } => {
                before.by_label(*l)
            }
            Action::TapButton(TapTarget::Text(_)) => {
                // Resolution succeeded, so exactly one element sits at the tap point.
                let (w, h) = self.device.screen_size();
                match resolve_with(action, before, w, h, &self.resolve) {
                    Ok(Gesture::TapAt { x, y }) => before.hit_test(x, y),
                    _ => None,
                }
            }
            Action::Text(_) => {
                let focused = self.focused.as_deref();
                before
                    .elements
                    .iter()
                    .find(|e| Some(e.key().as_str()) == focused)
                    .or_else(|| {
                        let mut editable = before.elements.iter().filter(|e| e.editable);
                        match (editable.next(), editable.next()) {
                            (Some(only), None) => Some(only),
                            _ => None,
                        }
                    })
            }
            Action::Back | Action::Home | Action::Wait | Action::Stop => None,
        }
    }

    /// Runs rounds until `budget` is spent or the model answers `Stop()`.
    pub fn run(&mut self, budget: u32) -> Result<(ExplorationReport, Vec<ExplorationRound>), ExploreAbort> {
        let mut report = ExplorationReport::default();
        let mut rounds = Vec::new();
        while report.rounds < budget {
            let (round, fx) = match self.explore_round() {
                Ok(r) => r,
                Err(error) => return Err(ExploreAbort { error, rounds }),
            };
            report.rounds += 1;
            report.docs_created += fx.docs_created;
            report.useless_added += fx.useless_added;
            let stop = round.action == Action::Stop;
            rounds.push(round);
            if stop {
                break;
            }
        }
        Ok((report, rounds))
    }
}

/// Side effects of one round, used for report aggregation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundEffects {
    pub docs_created: u32,
    pub useless_added: u32,
    pub backs_issued: u32,
}

/// Taps the launcher icon for `app_id` from the home screen.
pub fn launch_app(
    device: &mut dyn DeviceController,
    app_id: &str,
    clock: &dyn Clock,
) -> Result<(), ExploreError> {
    device.execute(&DeviceCommand::new("input keyevent KEYCODE_HOME"))?;
    let home = capture_screen(device, clock.now_ms())?;
    let rid = format!("launcher:{app_id}");
    let icon = home
        .labeled()
        .find(|e| e.resource_id() == Some(rid.as_str()))
        .or_else(|| home.labeled().find(|e| e.text().is_some_and(|t| t.eq_ignore_ascii_case(app_id))))
        .ok_or_else(|| ExploreError::NoLauncher(app_id.to_string()))?;
    let (x, y) = icon.bounds.center();
    device.execute(&DeviceCommand::new(format!("input tap {x} {y}")))?;
    Ok(())
}

/// Judges one executed action. Identical signatures short-circuit to
/// NO_CHANGE without a backend call. The inner error means the reply named
/// neither EFFECTIVE nor IRRELEVANT.
pub fn reflect(
    before: &Screen,
    after: &Screen,
    action: &Action,
    task: &str,
    templates: &Templates,
    backend: &mut dyn ChatBackend,
) -> Result<Result<ReflectionVerdict, UnparsableVerdict>, ExploreError> {
    if before.signature == after.signature {
        return Ok(Ok(ReflectionVerdict {
            kind: VerdictKind::NoChange,
            rationale: "screen unchanged".into(),
        }));
    }
    let bindings = BTreeMap::from([
        ("task", task.to_string()),
        ("action", action.render()),
        ("before", before.render_elements()),
        ("after", after.render_elements()),
    ]);
    let prompt = templates.reflection.render(&bindings)?;
    let reply = backend.complete(&[ChatMessage::user(prompt).with_image(after.screenshot_ref.clone())])?;
    Ok(parse_verdict(&reply))
}

/// Maps the first of EFFECTIVE / IRRELEVANT (any case, whole word) to a verdict.
pub fn parse_verdict(reply: &str) -> Result<ReflectionVerdict, UnparsableVerdict> {
    let upper = reply.to_ascii_uppercase();
    let find = |word: &str| {
        upper.match_indices(word).map(|(i, _)| i).find(|&i| {
            let before_ok = upper[..i].chars().next_back().is_none_or(|c| !c.is_ascii_alphanumeric());
            let after_ok = upper[i + word.len()..].chars().next().is_none_or(|c| !c.is_ascii_alphanumeric());
            before_ok && after_ok
        })
    };
    let hit = [("EFFECTIVE", VerdictKind::Effective), ("IRRELEVANT", VerdictKind::Irrelevant)]
        .into_iter()
        .filter_map(|(w, k)| find(w).map(|i| (i, w.len(), k)))
        .min_by_key(|(i, _, _)| *i);
    let Some((at, len, kind)) = hit else {
        return Err(UnparsableVerdict(reply.to_string()));
    };
    let rest = reply[at + len..].trim_start_matches(|c: char| c == ':' || c == '-' || c == '*' || c.is_whitespace());
    let rationale = rest.trim();
    Ok(ReflectionVerdict {
        kind,
        rationale: if rationale.is_empty() { kind.as_str().to_string() } else { rationale.to_string() },
    })
}

fn document_for(
    before: &Screen,
    el: &UiElement,
    action: &Action,
    verdict: &ReflectionVerdict,
    turn: &TurnOutput,
    now: u64,
) -> ElementDocument {
    let functionality = if verdict.rationale.trim().is_empty() {
        turn.thought.as_str()
    } else {
        verdict.rationale.as_str()
    };
    ElementDocument::from_element(&before.app_id, &before.signature, el, functionality, action.kind(), now)
}

/// Builds the document for an EFFECTIVE round.
pub fn document_from_round(round: &ExplorationRound, turn: &TurnOutput, target: &UiElement, now: u64) -> Result<ElementDocument, ExploreError> {
    if !round.action.kind().targets_element() {
        return Err(ExploreError::NonElementAction(round.action.render()));
    }
    Ok(document_for(&round.before, target, &round.action, &round.verdict, turn, now))
}

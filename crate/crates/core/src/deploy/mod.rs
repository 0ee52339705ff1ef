//! Task execution with retrieval-augmented prompts and summary memory.
//! Repeated ineffective rounds switch on a perception fallback; sensitive
//! screens hand control to a human operator.

mod memory;
mod safety;
mod trace;

use std::collections::BTreeMap;

use log::{info, warn};

use crate::action::{gesture_to_commands, resolve_with, Action, ResolveConfig, ACTION_SPACE_DOC};
use crate::clock::Clock;
use crate::device::{capture_screen, DeviceController, DeviceError, TaskSpec};
use crate::kb::{KnowledgeBase, RetrievalQuery, DEFAULT_K};
use crate::llm::{request_turn, ChatBackend, LlmError, TemplateError, Templates};
use crate::ui::{
    augment_with_perception, PerceptionProvider, Screen, DEFAULT_IOU_THRESHOLD,
    DEFAULT_MIN_CONFIDENCE,
};

pub use memory::{should_fallback_visual, HistoryEntry, Outcome, SessionMemory};
pub use safety::{
    classify_sensitive, default_lexicon, load_lexicon, manual_handoff, HandoffError,
    HandoffReport, OperatorChannel, SafetyVerdict, ScriptedOperator, StdioOperator,
    DEFAULT_LEXICON, SAFETY_NOTICE,
};
pub use trace::{HandoffRecord, StepRecord, TaskTrace, TerminatedBy, TraceError, TraceStep};

pub const DEFAULT_MAX_ROUNDS: u32 = 20;
pub const DEFAULT_FALLBACK_WINDOW: usize = 2;
pub const SAFETY_REQUIRES_OPERATOR: &str = "safety_requires_operator";

#[derive(Debug, Clone, PartialEq)]
pub struct DeployConfig {
    pub max_rounds: u32,
    pub k: usize,
    pub fallback_window: usize,
    pub lexicon: Vec<String>,
    pub resolve: ResolveConfig,
    pub min_confidence: f64,
    pub iou_threshold: f64,
}

impl Default for DeployConfig {
    fn default() -> Self {
        Self {
            max_rounds: DEFAULT_MAX_ROUNDS,
            k: DEFAULT_K,
            fallback_window: DEFAULT_FALLBACK_WINDOW,
            lexicon: default_lexicon(),
            resolve: ResolveConfig::default(),
            min_confidence: DEFAULT_MIN_CONFIDENCE,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
        }
    }
}

/// Errors that end a task early.
#[derive(Debug, thiserror::Error)]
pub enum DeployError {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("{SAFETY_REQUIRES_OPERATOR}: screen matched {0:?}")]
    SafetyRequiresOperator(Vec<String>),
    #[error(transparent)]
    Handoff(#[from] HandoffError),
}

impl DeployError {
    /// Short form stored in the trace.
    pub fn trace_message(&self) -> String {
        match self {
            Self::SafetyRequiresOperator(_) => SAFETY_REQUIRES_OPERATOR.to_string(),
            Self::Device(e) => format!("{}: {e}", e.kind()),
            Self::Backend(e) => e.to_string(),
            Self::Template(e) => format!("TemplateError: {e}"),
            Self::Handoff(HandoffError::ClosedChannel) => "ClosedChannel".to_string(),
            Self::Handoff(HandoffError::Device(e)) => format!("{}: {e}", e.kind()),
        }
    }
}

#[derive(Debug, Default)]
struct RunState {
    memory: SessionMemory,
    fallback_active: bool,
    agent_rounds: u32,
    steps: Vec<TraceStep>,
}

enum RoundEnd {
    Continue,
    Stopped,
}

/// One task-execution session over a device and a backend.
pub struct Deployment<'a> {
    device: &'a mut dyn DeviceController,
    backend: &'a mut dyn ChatBackend,
    templates: &'a Templates,
    clock: &'a dyn Clock,
    kb: Option<&'a KnowledgeBase>,
    perception: Option<&'a dyn PerceptionProvider>,
    operator: Option<&'a mut dyn OperatorChannel>,
    pub cfg: DeployConfig,
}

impl<'a> Deployment<'a> {
    pub fn new(
        device: &'a mut dyn DeviceController,
        backend: &'a mut dyn ChatBackend,
        templates: &'a Templates,
        clock: &'a dyn Clock,
    ) -> Self {
        Self {
            device,
            backend,
            templates,
            clock,
            kb: None,
            perception: None,
            operator: None,
            cfg: DeployConfig::default(),
        }
    }

    pub fn with_kb(mut self, kb: &'a KnowledgeBase) -> Self {
        self.kb = Some(kb);
        self
    }

    pub fn with_perception(mut self, p: &'a dyn PerceptionProvider) -> Self {
        self.perception = Some(p);
        self
    }

    /// Enables safety handoff. Without an operator a sensitive screen ends
    /// the task with `safety_requires_operator`.
    pub fn with_operator(mut self, op: &'a mut dyn OperatorChannel) -> Self {
        self.operator = Some(op);
        self
    }

    pub fn with_config(mut self, cfg: DeployConfig) -> Self {
        self.cfg = cfg;
        self
    }

    /// Runs rounds until `Stop()`, the round limit, or an aborting error.
    /// Handoffs do not count toward the limit.
    pub fn run_task(&mut self, task_id: &str, instruction: &str, goal: Option<&TaskSpec>) -> TaskTrace {
        let mut st = RunState::default();
        let (terminated_by, error) = loop {
            if st.agent_rounds >= self.cfg.max_rounds {
                break (TerminatedBy::MaxRounds, None);
            }
            match self.round(&mut st, instruction) {
                Ok(RoundEnd::Continue) => {}
                Ok(RoundEnd::Stopped) => break (TerminatedBy::StopAction, None),
                Err(e) => {
                    warn!("task {task_id} aborted: {e}");
                    break (TerminatedBy::Error, Some(e.trace_message()));
                }
            }
        };
        let final_goal_satisfied = goal.and_then(|t| {
            self.device
                .simulator()
                .and_then(|sim| sim.goal_satisfied(t).ok())
        });
        let wall_rounds = st.steps.len();
        TaskTrace {
            task_id: task_id.to_string(),
            steps: st.steps,
            terminated_by,
            error,
            final_goal_satisfied,
            wall_rounds,
        }
    }

    fn augment(&self, screen: Screen) -> Screen {
        let (Some(p), Some(shot)) = (self.perception, screen.screenshot_ref.clone()) else {
            return screen;
        };
        match p.perceive(&shot) {
            Ok(result) => augment_with_perception(screen, &result, self.cfg.min_confidence, self.cfg.iou_threshold),
            Err(e) => {
                warn!("perception failed for {shot}: {e}");
                screen
            }
        }
    }

    /// Documents for the labeled elements: exact resource-id hits plus
    /// similarity hits with a positive score, first occurrence wins.
    fn retrieve(&self, screen: &Screen) -> (Vec<String>, String) {
        let Some(kb) = self.kb else {
            return (Vec::new(), "(no knowledge base loaded)".to_string());
        };
        let mut ids: Vec<String> = Vec::new();
        let mut lines = Vec::new();
        for e in screen.labeled() {
            let query_text = e.text().or(e.content_desc()).or(e.visual_desc()).unwrap_or("");
            let rid = e.resource_id();
            if query_text.is_empty() && rid.is_none() {
                continue;
            }
            let q = RetrievalQuery {
                app_id: screen.app_id.clone(),
                resource_id: rid.map(str::to_string),
                query_text: query_text.to_string(),
                k: self.cfg.k,
            };
            for (score, d) in kb.retrieve_scored(&q) {
                let exact = rid.is_some() && d.resource_id.as_deref() == rid;
                if !(exact || score > 0.0) || ids.contains(&d.doc_id) {
                    continue;
                }
                ids.push(d.doc_id.clone());
                let label = e.label.map_or_else(|| "-".to_string(), |l| l.to_string());
                lines.push(format!("- [{label}] {}: {}", d.element_key, d.functionality));
            }
        }
        let text = if lines.is_empty() {
            "(no matching documents)".to_string()
        } else {
            lines.join("\n")
        };
        (ids, text)
    }

    fn round(&mut self, st: &mut RunState, instruction: &str) -> Result<RoundEnd, DeployError> {
        let round = st.agent_rounds + 1;
        let fallback_active = st.fallback_active;
        let mut before = capture_screen(self.device, self.clock.now_ms())?;
        if fallback_active {
            before = self.augment(before);
        }

        let verdict = classify_sensitive(&before, &self.cfg.lexicon);
        if verdict.sensitive {
            let Some(op) = self.operator.as_deref_mut() else {
                return Err(DeployError::SafetyRequiresOperator(verdict.matched_terms));
            };
            info!("round {round}: sensitive screen ({}), handing off", verdict.matched_terms.join(", "));
            let report = manual_handoff(self.device, op)?;
            st.steps.push(TraceStep::Handoff(HandoffRecord {
                round,
                safety_handoff: true,
                commands_relayed: report.commands_relayed,
            }));
            return Ok(RoundEnd::Continue);
        }
        st.memory.visit_app(&before.app_id);

        let (used_documents, documents) = self.retrieve(&before);
        let bindings = BTreeMap::from([
            ("task", instruction.to_string()),
            ("action_space", ACTION_SPACE_DOC.to_string()),
            ("elements", before.render_elements()),
            ("documents", documents),
            ("memory", st.memory.render_memory()),
            ("history", st.memory.render_history()),
        ]);
        let prompt = self.templates.task.render(&bindings)?;
        st.agent_rounds = round;

        let mut step = StepRecord {
            round,
            screen_before_sig: before.signature.clone(),
            screen_after_sig: before.signature.clone(),
            element_count: before.elements.len(),
            turn: None,
            gesture: None,
            outcome: Outcome::Ok,
            used_documents,
            fallback_active,
            safety_handoff: false,
        };

        let turn = match request_turn(self.backend, &prompt, before.screenshot_ref.as_deref())? {
            Ok(t) => t.with_previous_summary(&st.memory.last_summary),
            Err(e) => {
                warn!("round {round}: {e}");
                step.outcome = Outcome::error("NoAction");
                self.finish_round(st, step, None);
                return Ok(RoundEnd::Continue);
            }
        };
        if !turn.summary_missing() {
            st.memory.last_summary = turn.summary.clone();
        }
        let action = turn.action.clone();
        step.turn = Some(turn);

        if action == Action::Stop {
            self.finish_round(st, step, Some(action));
            return Ok(RoundEnd::Stopped);
        }

        let (w, h) = self.device.screen_size();
        match resolve_with(&action, &before, w, h, &self.cfg.resolve) {
            Err(e) => step.outcome = Outcome::error(e.kind()),
            Ok(gesture) => {
                let mut changed = false;
                for cmd in gesture_to_commands(&gesture) {
                    match self.device.execute(&cmd) {
                        Ok(r) => changed |= r.changed_screen,
                        Err(e @ DeviceError::BadCommand(_)) => {
                            step.outcome = Outcome::error(e.kind());
                            break;
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                if step.outcome == Outcome::Ok && !changed {
                    step.outcome = Outcome::NoChange;
                }
                step.gesture = Some(gesture);
                step.screen_after_sig = capture_screen(self.device, self.clock.now_ms())?.signature;
            }
        }
        self.finish_round(st, step, Some(action));
        Ok(RoundEnd::Continue)
    }

    fn finish_round(&self, st: &mut RunState, step: StepRecord, action: Option<Action>) {
        info!("round {}: {:?} -> {:?}", step.round, action.as_ref().map(Action::render), step.outcome);
        st.memory.record(HistoryEntry {
            round: step.round,
            action,
            outcome: step.outcome.clone(),
        });
        if !st.fallback_active && should_fallback_visual(&st.memory, self.cfg.fallback_window) {
            info!("round {}: switching to perception-augmented screens", step.round);
            st.fallback_active = true;
        }
        st.steps.push(TraceStep::Step(step));
    }
}

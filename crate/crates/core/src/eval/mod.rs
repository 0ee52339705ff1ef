//! Task metrics and suite runs.
//!
//! Every metric is recomputed from a trace by replaying its gestures on a
//! fresh simulator, so persisted traces evaluate identically to live ones.

mod report;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::action::{gesture_to_commands, Action};
use crate::deploy::{TaskTrace, TerminatedBy, TraceStep};
use crate::device::{capture_screen, DeviceError, Simulator, Suite, TaskSpec, HOME_APP};

pub use report::{run_suite, Averages, EvalConfig, SuiteReport, TaskReport, REPORT_NOTES};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("ReplayDivergence at round {round}: {detail}")]
    ReplayDivergence { round: u32, detail: String },
    #[error("MissingReference: task {0} has no {1}")]
    MissingReference(String, &'static str),
    #[error("replay failed: {0}")]
    Device(#[from] DeviceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelativeEfficiency {
    pub agent_steps: u32,
    pub human_steps: u32,
}

impl fmt::Display for RelativeEfficiency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.agent_steps, self.human_steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub su: u8,
    pub ps: f64,
    pub re: RelativeEfficiency,
    pub cr: f64,
}

/// What the oracle saw around one agent step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayedStep {
    pub round: u32,
    pub is_stop: bool,
    pub distance_before: Option<u32>,
    pub distance_after: Option<u32>,
    pub goal_before: bool,
}

impl ReplayedStep {
    /// `Some(true)` for progress, `Some(false)` for a wasted or wrong step,
    /// `None` for a Stop issued on a satisfied goal.
    pub fn verdict(&self) -> Option<bool> {
        if self.is_stop {
            return if self.goal_before { None } else { Some(false) };
        }
        Some(matches!(
            (self.distance_before, self.distance_after),
            (Some(b), Some(a)) if a < b
        ))
    }
}

/// A trace replayed against its suite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replay {
    pub steps: Vec<ReplayedStep>,
    /// Screen ids in visit order, starting with the initial screen.
    pub visited: Vec<String>,
    pub goal_at_end: bool,
}

/// `home` on the launcher, `app/screen` elsewhere.
pub fn screen_id(sim: &Simulator) -> String {
    if sim.current_app() == HOME_APP {
        HOME_APP.to_string()
    } else {
        format!("{}/{}", sim.current_app(), sim.current_screen_id())
    }
}

/// Re-executes the trace's gestures on a fresh simulator, checking each
/// recorded signature along the way.
pub fn replay(trace: &TaskTrace, sim: &Simulator, task: &TaskSpec) -> Result<Replay, EvalError> {
    let mut sim = sim.fresh();
    let mut visited = vec![screen_id(&sim)];
    let mut steps = Vec::new();
    for entry in &trace.steps {
        let step = match entry {
            TraceStep::Step(s) => s,
            TraceStep::Handoff(h) => {
                return Err(EvalError::ReplayDivergence {
                    round: h.round,
                    detail: "operator commands are not recorded".into(),
                })
            }
        };
        let diverged = |what: &str, expected: &str, found: &str| EvalError::ReplayDivergence {
            round: step.round,
            detail: format!("{what} signature {found}, trace has {expected}"),
        };
        let sig = capture_screen(&mut sim, 0)?.signature;
        // Augmented screens hash differently from the raw capture.
        if !step.fallback_active && sig != step.screen_before_sig {
            return Err(diverged("before", &step.screen_before_sig, &sig));
        }
        let goal_before = sim.goal_satisfied(task)?;
        let distance_before = sim.shortest_steps(task);
        let is_stop = step.turn.as_ref().is_some_and(|t| t.action == Action::Stop);
        if let Some(g) = &step.gesture {
            for cmd in gesture_to_commands(g) {
                sim.apply(&cmd)?;
            }
            let after = capture_screen(&mut sim, 0)?.signature;
            if after != step.screen_after_sig {
                return Err(diverged("after", &step.screen_after_sig, &after));
            }
            let id = screen_id(&sim);
            if visited.last() != Some(&id) {
                visited.push(id);
            }
        }
        let distance_after = if step.gesture.is_some() { sim.shortest_steps(task) } else { distance_before };
        steps.push(ReplayedStep {
            round: step.round,
            is_stop,
            distance_before,
            distance_after,
            goal_before,
        });
    }
    let goal_at_end = sim.goal_satisfied(task)?;
    Ok(Replay { steps, visited, goal_at_end })
}

pub fn success(trace: &TaskTrace, replay: &Replay) -> u8 {
    u8::from(replay.goal_at_end && trace.terminated_by == TerminatedBy::StopAction)
}

/// Correct steps over counted steps. A Stop on a satisfied goal is neither.
pub fn process_score(replay: &Replay) -> f64 {
    if replay.steps.is_empty() {
        return 0.0;
    }
    let verdicts: Vec<bool> = replay.steps.iter().filter_map(ReplayedStep::verdict).collect();
    if verdicts.is_empty() {
        return 1.0;
    }
    verdicts.iter().filter(|c| **c).count() as f64 / verdicts.len() as f64
}

/// Executed non-Stop agent steps against the human step count.
pub fn relative_efficiency(trace: &TaskTrace, task: &TaskSpec) -> RelativeEfficiency {
    let agent_steps = trace
        .agent_steps()
        .filter(|s| !s.turn.as_ref().is_some_and(|t| t.action == Action::Stop))
        .count() as u32;
    RelativeEfficiency {
        agent_steps,
        human_steps: task.human_steps,
    }
}

/// Longest prefix of `path` occurring in order within `visited`.
pub fn milestone_prefix(path: &[String], visited: &[String]) -> usize {
    let mut m = 0;
    for id in visited {
        if m < path.len() && *id == path[m] {
            m += 1;
        }
    }
    m
}

pub fn completion_ratio(replay: &Replay, task: &TaskSpec) -> Result<f64, EvalError> {
    let path = task
        .human_path
        .as_ref()
        .filter(|p| !p.is_empty())
        .ok_or_else(|| EvalError::MissingReference(task.task_id.clone(), "human_path"))?;
    let m = milestone_prefix(path, &replay.visited);
    Ok((m as f64 / path.len() as f64).min(1.0))
}

/// Length of the shared prefix of the trace's actions and the reference,
/// over the reference length.
pub fn reference_prefix_ratio(trace: &TaskTrace, task: &TaskSpec) -> Result<f64, EvalError> {
    let reference = Suite::canonical_references(task)
        .filter(|r| !r.is_empty())
        .ok_or_else(|| EvalError::MissingReference(task.task_id.clone(), "reference_actions"))?;
    let taken: Vec<Option<String>> = trace
        .agent_steps()
        .map(|s| s.turn.as_ref().map(|t| t.action.render()))
        .collect();
    let prefix = reference
        .iter()
        .zip(&taken)
        .take_while(|(r, t)| t.as_deref() == Some(r.as_str()))
        .count();
    Ok(prefix as f64 / reference.len() as f64)
}

/// Mean per-task reference-prefix ratio.
pub fn droidtask_completion_rate<'a>(
    results: impl IntoIterator<Item = (&'a TaskTrace, &'a TaskSpec)>,
) -> Result<Option<f64>, EvalError> {
    let ratios = results
        .into_iter()
        .map(|(trace, task)| reference_prefix_ratio(trace, task))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(mean(&ratios))
}

pub fn evaluate(trace: &TaskTrace, sim: &Simulator, task: &TaskSpec) -> Result<Metrics, EvalError> {
    let replay = replay(trace, sim, task)?;
    Ok(Metrics {
        su: success(trace, &replay),
        ps: process_score(&replay),
        re: relative_efficiency(trace, task),
        cr: completion_ratio(&replay, task)?,
    })
}

pub(crate) fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::{evaluate, mean, reference_prefix_ratio, Metrics};
use crate::clock::StepClock;
use crate::deploy::{DeployConfig, Deployment, TaskTrace, TerminatedBy};
use crate::device::{Simulator, TaskSpec};
use crate::llm::{ScriptedBackend, Templates};
use crate::ui::FixturePerception;

/// Footnotes attached to every report.
pub const REPORT_NOTES: [&str; 3] = [
    "PS: a step is correct when it strictly shortens the simulator's shortest path to the goal; a Stop on a satisfied goal is not counted",
    "RE: Stop() is not counted as an agent step",
    "CR: longest prefix of the human screen path visited in order",
];

#[derive(Debug, Clone, Default)]
pub struct EvalConfig {
    pub deploy: DeployConfig,
    /// Worker threads; 0 and 1 both mean sequential.
    pub jobs: usize,
    pub templates: Templates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    /// Reference-prefix ratio for this task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub droidtask: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminated_by: Option<TerminatedBy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Arithmetic means over the tasks that produced metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub su: f64,
    pub ps: f64,
    pub re_agent: f64,
    pub re_human: f64,
    pub cr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub tasks: Vec<TaskReport>,
    /// `None` when no task produced metrics.
    pub averages: Option<Averages>,
    pub droidtask_completion_rate: Option<f64>,
    /// Share of tasks whose whole reference sequence was matched.
    pub droidtask_all_or_nothing: Option<f64>,
    pub notes: Vec<String>,
}

impl SuiteReport {
    pub fn from_tasks(tasks: Vec<TaskReport>) -> Self {
        let metrics: Vec<&Metrics> = tasks.iter().filter_map(|t| t.metrics.as_ref()).collect();
        let col = |f: fn(&Metrics) -> f64| mean(&metrics.iter().map(|m| f(m)).collect::<Vec<_>>());
        let averages = col(|m| f64::from(m.su)).map(|su| Averages {
            su,
            ps: col(|m| m.ps).unwrap_or_default(),
            re_agent: col(|m| f64::from(m.re.agent_steps)).unwrap_or_default(),
            re_human: col(|m| f64::from(m.re.human_steps)).unwrap_or_default(),
            cr: col(|m| m.cr).unwrap_or_default(),
        });
        let ratios: Vec<f64> = tasks.iter().filter_map(|t| t.droidtask).collect();
        let whole: Vec<f64> = ratios.iter().map(|r| if *r >= 1.0 { 1.0 } else { 0.0 }).collect();
        Self {
            tasks,
            averages,
            droidtask_completion_rate: mean(&ratios),
            droidtask_all_or_nothing: mean(&whole),
            notes: REPORT_NOTES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn all_evaluated(&self) -> bool {
        self.tasks.iter().all(|t| t.error.is_none())
    }

    /// Aligned text table, one row per task, then the average row and notes.
    pub fn render_table(&self) -> String {
        let header = ["Task", "SU", "PS", "RE", "CR", "DroidTask", "Status"];
        let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for t in &self.tasks {
            let status = match (&t.error, t.terminated_by) {
                (Some(e), _) => format!("error: {e}"),
                (None, Some(by)) => by.to_string(),
                (None, None) => "-".into(),
            };
            let mut row = vec![t.task_id.clone()];
            match &t.metrics {
                Some(m) => row.extend([
                    m.su.to_string(),
                    format!("{:.2}", m.ps),
                    m.re.to_string(),
                    percent(m.cr),
                ]),
                None => row.extend(["-", "-", "-", "-"].map(String::from)),
            }
            row.push(t.droidtask.map_or("-".into(), |r| format!("{r:.3}")));
            row.push(status);
            rows.push(row);
        }
        let avg = match &self.averages {
            Some(a) => vec![
                "Avg".into(),
                format!("{:.2}", a.su),
                format!("{:.2}", a.ps),
                format!("{:.1}/{:.1}", a.re_agent, a.re_human),
                percent(a.cr),
                self.droidtask_completion_rate.map_or("-".into(), |r| format!("{r:.3}")),
                format!("{} tasks", self.tasks.len()),
            ],
            None => vec!["Avg".into(), "n/a".into(), "n/a".into(), "n/a".into(), "n/a".into(), "n/a".into(), "0 tasks".into()],
        };
        rows.push(avg);

        let widths: Vec<usize> = (0..header.len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in rows.iter().enumerate() {
            let cells: Vec<String> = row.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
            if i == 0 || i == rows.len() - 2 {
                let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            }
        }
        if let Some(r) = self.droidtask_all_or_nothing {
            let _ = writeln!(out, "DroidTask all-or-nothing: {r:.3}");
        }
        for note in &self.notes {
            let _ = writeln!(out, "* {note}");
        }
        out
    }
}

fn percent(x: f64) -> String {
    let p = x * 100.0;
    if (p - p.round()).abs() < 1e-9 {
        format!("{p:.0}%")
    } else {
        format!("{p:.1}%")
    }
}

/// Runs every suite task on a fresh simulator with the script
/// `<scripts_dir>/<task_id>.json`, then scores the traces.
pub fn run_suite(sim: &Simulator, scripts_dir: &Path, cfg: &EvalConfig) -> SuiteReport {
    let tasks = sim.suite().tasks();
    let perception = match sim.suite().perception_path() {
        Some(p) => match FixturePerception::load(&p) {
            Ok(f) => Some(f),
            Err(e) => {
                warn!("perception fixture {} not loaded: {e}", p.display());
                None
            }
        },
        None => None,
    };
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<TaskReport>>> = Mutex::new(vec![None; tasks.len()]);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(task) = tasks.get(i) else { break };
        let script = scripts_dir.join(format!("{}.json", task.task_id));
        let report = run_one(sim, task, script, perception.as_ref(), cfg);
        results.lock().expect("report slot poisoned")[i] = Some(report);
    };
    let jobs = cfg.jobs.clamp(1, tasks.len().max(1));
    if jobs == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(worker);
            }
        });
    }
    let tasks = results
        .into_inner()
        .expect("report slot poisoned")
        .into_iter()
        .map(|r| r.expect("every task visited"))
        .collect();
    SuiteReport::from_tasks(tasks)
}

fn run_one(
    sim: &Simulator,
    task: &TaskSpec,
    script: PathBuf,
    perception: Option<&FixturePerception>,
    cfg: &EvalConfig,
) -> TaskReport {
    let mut report = TaskReport {
        task_id: task.task_id.clone(),
        metrics: None,
        droidtask: None,
        terminated_by: None,
        error: None,
    };
    let mut backend = match ScriptedBackend::load(&script) {
        Ok(b) => b,
        Err(e) => {
            warn!("{}: {e}", task.task_id);
            report.error = Some(e.to_string());
            return report;
        }
    };
    let trace = run_trace(sim, task, &mut backend, perception, cfg);
    info!("{}: {} after {} rounds", task.task_id, trace.terminated_by, trace.wall_rounds);
    report.terminated_by = Some(trace.terminated_by);
    report.droidtask = reference_prefix_ratio(&trace, task).ok();
    match evaluate(&trace, sim, task) {
        Ok(m) => report.metrics = Some(m),
        Err(e) => report.error = Some(e.to_string()),
    }
    report
}

fn run_trace(
    sim: &Simulator,
    task: &TaskSpec,
    backend: &mut ScriptedBackend,
    perception: Option<&FixturePerception>,
    cfg: &EvalConfig,
) -> TaskTrace {
    let mut device = sim.fresh();
    let clock = StepClock::default();
    let mut d = Deployment::new(&mut device, backend, &cfg.templates, &clock).with_config(cfg.deploy.clone());
    if let Some(p) = perception {
        d = d.with_perception(p);
    }
    d.run_task(&task.task_id, &task.instruction, Some(task))
}

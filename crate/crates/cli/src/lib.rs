//! Command-line front end: argument grammar, wiring and exit codes.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use mobile_agent::clock::{Clock, StepClock, SystemClock};
use mobile_agent::deploy::{
    default_lexicon, load_lexicon, DeployConfig, Deployment, StdioOperator, TerminatedBy,
    DEFAULT_FALLBACK_WINDOW, DEFAULT_MAX_ROUNDS,
};
use mobile_agent::device::{AdbDevice, DeviceController, ProcessTransport, Simulator};
use mobile_agent::eval::{run_suite, EvalConfig};
use mobile_agent::explore::{launch_app, parse_manual_events, record_manual, ExploreSession, DEFAULT_BUDGET};
use mobile_agent::kb::{KnowledgeBase, RetrievalQuery, DEFAULT_K};
use mobile_agent::llm::{ChatBackend, HttpBackend, HttpConfig, ScriptedBackend, Templates};
use mobile_agent::ui::FixturePerception;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

const DEFAULT_EXPLORE_TASK: &str = "Learn what each element of this app does";

#[derive(Debug, Parser)]
#[command(name = "mobile-agent", version, about = "Learn what Android app elements do, then run tasks with that knowledge")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Let the model explore an app and document what its elements do.
    Explore(ExploreArgs),
    /// Document elements from a recorded human demonstration.
    Record(RecordArgs),
    /// Execute one task.
    Run(RunArgs),
    /// Run every task of a simulated suite and score it.
    Eval(EvalArgs),
    /// Query a knowledge-base file.
    Kb(KbArgs),
    /// Validate a simulated suite and check every goal is reachable.
    SimCheck(SimCheckArgs),
}

#[derive(Debug, Args)]
pub struct ExploreArgs {
    #[arg(long)]
    pub suite: PathBuf,
    #[arg(long)]
    pub app: String,
    /// Goal given to the model while exploring.
    #[arg(long, default_value = DEFAULT_EXPLORE_TASK)]
    pub task: String,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u32,
    /// Knowledge-base file; created when missing, rewritten on exit.
    #[arg(long)]
    pub kb: PathBuf,
    /// scripted:PATH or http:URL
    #[arg(long)]
    pub backend: BackendSpec,
}

#[derive(Debug, Args)]
pub struct RecordArgs {
    #[arg(long)]
    pub suite: PathBuf,
    #[arg(long)]
    pub app: String,
    /// JSON lines of {"cmd": ...} gestures ending with {"end": true}.
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub backend: BackendSpec,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("target").required(true).args(["suite", "device"])))]
#[command(group(ArgGroup::new("model").required(true).args(["script", "backend"])))]
pub struct RunArgs {
    #[arg(long)]
    pub suite: Option<PathBuf>,
    /// adb or adb:SERIAL
    #[arg(long)]
    pub device: Option<DeviceSpec>,
    /// Task id in the suite, or the instruction itself on a device.
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub kb: Option<PathBuf>,
    /// Shorthand for --backend scripted:PATH
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long)]
    pub backend: Option<BackendSpec>,
    #[arg(long, default_value_t = DEFAULT_MAX_ROUNDS)]
    pub max_rounds: u32,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_FALLBACK_WINDOW)]
    pub fallback_window: usize,
    /// Sensitive-term list, one per line.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Abort on sensitive screens instead of asking an operator on stdin.
    #[arg(long)]
    pub non_interactive: bool,
    /// Write the trace as JSON lines.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub suite: PathBuf,
    /// Directory holding one <task_id>.json script per task.
    #[arg(long)]
    pub scripts: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct KbArgs {
    #[arg(long)]
    pub file: PathBuf,
    #[arg(long)]
    pub query: String,
    #[arg(long)]
    pub app: String,
    #[arg(long)]
    pub rid: Option<String>,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct SimCheckArgs {
    #[arg(long)]
    pub suite: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Scripted(PathBuf),
    Http(String),
}

impl std::str::FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(Self::Http(s.to_string()));
        }
        match s.split_once(':') {
            Some(("scripted", p)) if !p.is_empty() => Ok(Self::Scripted(PathBuf::from(p))),
            Some(("http", u)) if !u.is_empty() => Ok(Self::Http(u.to_string())),
            _ => Err(format!("expected scripted:PATH or http:URL, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceSpec {
    pub serial: Option<String>,
}

impl std::str::FromStr for DeviceSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "adb" => Ok(Self { serial: None }),
            Some(("adb", serial)) if !serial.is_empty() => Ok(Self {
                serial: Some(serial.to_string()),
            }),
            _ => Err(format!("expected adb or adb:SERIAL, got {s:?}")),
        }
    }
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn config(e: impl fmt::Display) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: e.to_string(),
    }
}

fn runtime(e: impl fmt::Display) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        message: e.to_string(),
    }
}

type Outcome = Result<i32, Failure>;

/// Parses `argv` (program name first), runs the verb and returns the exit
/// code. Results go to `out`, diagnostics to `err`.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {f}");
            f.code
        }
    }
}

pub fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match cmd {
        Command::Explore(a) => explore(a, out),
        Command::Record(a) => record(a, out),
        Command::Run(a) => run_task(a, out),
        Command::Eval(a) => eval(a, out, err),
        Command::Kb(a) => kb_query(a, out),
        Command::SimCheck(a) => sim_check(a, out),
    }
}

fn emit(out: &mut dyn Write, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    writeln!(out, "{text}").map_err(runtime)
}

fn load_sim(path: &Path) -> Result<Simulator, Failure> {
    Simulator::load_suite(path).map_err(config)
}

fn make_backend(spec: &BackendSpec) -> Result<Box<dyn ChatBackend>, Failure> {
    Ok(match spec {
        BackendSpec::Scripted(p) => Box::new(ScriptedBackend::load(p).map_err(config)?),
        BackendSpec::Http(url) => Box::new(HttpBackend::new(HttpConfig::from_env(url.clone()))),
    })
}

fn explore(a: ExploreArgs, out: &mut dyn Write) -> Outcome {
    let mut sim = load_sim(&a.suite)?;
    let mut kb = KnowledgeBase::open(&a.kb).map_err(config)?;
    let mut backend = make_backend(&a.backend)?;
    let templates = Templates::default();
    let clock = StepClock::default();
    launch_app(&mut sim, &a.app, &clock).map_err(config)?;
    let result = ExploreSession::new(&mut sim, &mut kb, backend.as_mut(), &templates, &clock, a.task).run(a.budget);
    kb.persist(&a.kb).map_err(runtime)?;
    let (report, _) = result.map_err(runtime)?;
    info!("explored {} rounds, {} documents in {}", report.rounds, kb.len(), a.kb.display());
    emit(out, &report)?;
    Ok(EXIT_OK)
}

fn record(a: RecordArgs, out: &mut dyn Write) -> Outcome {
    let mut sim = load_sim(&a.suite)?;
    let text = std::fs::read_to_string(&a.events).map_err(|e| config(format!("{}: {e}", a.events.display())))?;
    let events = parse_manual_events(&text).map_err(config)?;
    let mut kb = KnowledgeBase::open(&a.kb).map_err(config)?;
    let mut backend = make_backend(&a.backend)?;
    let templates = Templates::default();
    let clock = StepClock::default();
    launch_app(&mut sim, &a.app, &clock).map_err(config)?;
    let mut session = ExploreSession::new(&mut sim, &mut kb, backend.as_mut(), &templates, &clock, "");
    let result = record_manual(&mut session, events);
    kb.persist(&a.kb).map_err(runtime)?;
    emit(out, &result.map_err(runtime)?)?;
    Ok(EXIT_OK)
}

fn run_task(a: RunArgs, out: &mut dyn Write) -> Outcome {
    let lexicon = match &a.lexicon {
        Some(p) => load_lexicon(p).map_err(config)?,
        None => default_lexicon(),
    };
    let kb = a.kb.as_deref().map(KnowledgeBase::load).transpose().map_err(config)?;
    let spec = match (&a.script, &a.backend) {
        (Some(p), _) => BackendSpec::Scripted(p.clone()),
        (None, Some(b)) => b.clone(),
        (None, None) => unreachable!("clap requires one of --script and --backend"),
    };
    let mut backend = make_backend(&spec)?;
    let cfg = DeployConfig {
        max_rounds: a.max_rounds,
        k: a.k,
        fallback_window: a.fallback_window,
        lexicon,
        ..DeployConfig::default()
    };

    let (mut device, task, perception, clock): (Box<dyn DeviceController>, _, _, Box<dyn Clock>) = match (&a.suite, &a.device) {
        (Some(path), _) => {
            let sim = load_sim(path)?;
            let task = sim
                .suite()
                .task(&a.task)
                .cloned()
                .ok_or_else(|| config(format!("UnknownTask: {:?} is not in {}", a.task, path.display())))?;
            let perception = sim
                .suite()
                .perception_path()
                .map(|p| FixturePerception::load(&p))
                .transpose()
                .map_err(config)?;
            (Box::new(sim), Some(task), perception, Box::new(StepClock::default()))
        }
        (None, Some(d)) => {
            let serial = d.serial.clone();
            let transport = ProcessTransport::new(serial.clone());
            let dev = AdbDevice::connect(transport, serial.unwrap_or_else(|| "default".into())).map_err(runtime)?;
            (Box::new(dev), None, None, Box::new(SystemClock))
        }
        (None, None) => unreachable!("clap requires one of --suite and --device"),
    };

    let templates = Templates::default();
    let mut operator = StdioOperator;
    let mut d = Deployment::new(device.as_mut(), backend.as_mut(), &templates, clock.as_ref()).with_config(cfg);
    if let Some(kb) = &kb {
        d = d.with_kb(kb);
    }
    if let Some(p) = &perception {
        d = d.with_perception(p);
    }
    if !a.non_interactive {
        d = d.with_operator(&mut operator);
    }
    let (task_id, instruction) = match &task {
        Some(t) => (t.task_id.clone(), t.instruction.clone()),
        None => ("adhoc".to_string(), a.task.clone()),
    };
    let trace = d.run_task(&task_id, &instruction, task.as_ref());
    if let Some(p) = &a.trace_out {
        trace.write(p).map_err(runtime)?;
    }
    emit(out, &trace)?;
    match (trace.terminated_by, &trace.error) {
        (TerminatedBy::Error, Some(e)) => Err(runtime(format!("task aborted: {e}"))),
        (TerminatedBy::Error, None) => Err(runtime("task aborted")),
        _ => Ok(EXIT_OK),
    }
}

fn eval(a: EvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let sim = load_sim(&a.suite)?;
    if !a.scripts.is_dir() {
        return Err(config(format!("{} is not a directory", a.scripts.display())));
    }
    let cfg = EvalConfig {
        jobs: a.jobs,
        ..EvalConfig::default()
    };
    let report = run_suite(&sim, &a.scripts, &cfg);
    if let Some(p) = &a.out {
        let json = serde_json::to_string_pretty(&report).map_err(runtime)?;
        std::fs::write(p, json + "\n").map_err(|e| runtime(format!("{}: {e}", p.display())))?;
    }
    write!(err, "{}", report.render_table()).map_err(runtime)?;
    emit(out, &report)?;
    if report.all_evaluated() {
        Ok(EXIT_OK)
    } else {
        Err(runtime("some tasks could not be evaluated"))
    }
}

fn kb_query(a: KbArgs, out: &mut dyn Write) -> Outcome {
    let kb = KnowledgeBase::load(&a.file).map_err(config)?;
    let q = RetrievalQuery {
        app_id: a.app,
        resource_id: a.rid,
        query_text: a.query,
        k: a.k,
    };
    emit(out, &kb.retrieve(&q))?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct TaskCheck<'a> {
    task_id: &'a str,
    human_steps: u32,
    shortest_steps: Option<u32>,
}

#[derive(Serialize)]
struct SimCheckReport<'a> {
    status: &'static str,
    apps: usize,
    screens: usize,
    tasks: Vec<TaskCheck<'a>>,
}

fn sim_check(a: SimCheckArgs, out: &mut dyn Write) -> Outcome {
    let sim = load_sim(&a.suite)?;
    let suite = sim.suite();
    let tasks: Vec<TaskCheck> = suite
        .tasks()
        .iter()
        .map(|t| TaskCheck {
            task_id: &t.task_id,
            human_steps: t.human_steps,
            shortest_steps: sim.shortest_steps(t),
        })
        .collect();
    let unreachable: Vec<&str> = tasks.iter().filter(|t| t.shortest_steps.is_none()).map(|t| t.task_id).collect();
    let report = SimCheckReport {
        status: if unreachable.is_empty() { "ok" } else { "unreachable_goal" },
        apps: suite.file.apps.len(),
        screens: suite.file.apps.iter().map(|a| a.screens.len()).sum(),
        tasks,
    };
    emit(out, &report)?;
    if unreachable.is_empty() {
        Ok(EXIT_OK)
    } else {
        Err(config(format!("UnreachableGoal: {}", unreachable.join(", "))))
    }
}

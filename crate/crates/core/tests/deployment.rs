mod common;

use std::collections::BTreeSet;
use std::path::PathBuf;

use mobile_agent::action::{Action, ActionKind, TapTarget};
use mobile_agent::clock::StepClock;
use mobile_agent::deploy::{
    classify_sensitive, default_lexicon, manual_handoff, DeployConfig, Deployment, HandoffError,
    Outcome, ScriptedOperator, TaskTrace, TerminatedBy, TraceStep, SAFETY_NOTICE,
};
use mobile_agent::device::{DeviceCommand, DeviceController, Simulator, Suite};
use mobile_agent::kb::{ElementDocument, KnowledgeBase};
use mobile_agent::llm::{ScriptEntry, ScriptedBackend, Templates};
use mobile_agent::ui::{FixturePerception, Screen};

fn sim() -> Simulator {
    Simulator::load_suite(&common::suite_path()).unwrap()
}

fn safety_dir() -> PathBuf {
    common::fixtures().join("safety")
}

fn turn(action: &str, summary: &str) -> String {
    format!("Observation: o\nThought: t\nAction: {action}\nSummary: {summary}")
}

fn task_script(task_id: &str) -> ScriptedBackend {
    ScriptedBackend::load(&common::fixtures().join(format!("suite/scripts/{task_id}.json"))).unwrap()
}

fn run(
    sim: &mut Simulator,
    backend: &mut ScriptedBackend,
    task_id: &str,
    cfg: DeployConfig,
) -> TaskTrace {
    let templates = Templates::default();
    let clock = StepClock::default();
    let task = sim.suite().task(task_id).cloned();
    let instruction = task.as_ref().map_or("do it".to_string(), |t| t.instruction.clone());
    let mut d = Deployment::new(sim, backend, &templates, &clock).with_config(cfg);
    d.run_task(task_id, &instruction, task.as_ref())
}

fn actions(trace: &TaskTrace) -> Vec<String> {
    trace
        .agent_steps()
        .map(|s| s.turn.as_ref().map_or("-".into(), |t| t.action.render()))
        .collect()
}

#[test]
fn immediate_stop_is_one_step() {
    let mut sim = sim();
    let mut backend = ScriptedBackend::new(vec![ScriptEntry::reply(turn("Stop()", "nothing to do"))]);
    let trace = run(&mut sim, &mut backend, "notes_new_memo", DeployConfig::default());
    assert_eq!(trace.wall_rounds, 1);
    assert_eq!(trace.terminated_by, TerminatedBy::StopAction);
    assert_eq!(trace.final_goal_satisfied, Some(false));
    let step = trace.agent_steps().next().unwrap();
    assert!(step.gesture.is_none());
}

#[test]
fn never_stopping_hits_max_rounds() {
    let mut sim = sim();
    let mut backend = ScriptedBackend::new((0..7).map(|_| ScriptEntry::reply(turn("Wait()", "waiting"))).collect());
    let cfg = DeployConfig { max_rounds: 7, ..DeployConfig::default() };
    let trace = run(&mut sim, &mut backend, "notes_new_memo", cfg);
    assert_eq!(trace.wall_rounds, 7);
    assert_eq!(trace.terminated_by, TerminatedBy::MaxRounds);
    assert!(trace.agent_steps().all(|s| s.outcome == Outcome::NoChange));
}

#[test]
fn notes_task_five_replies_reaches_goal() {
    let mut sim = sim();
    let mut backend = task_script("notes_new_memo");
    let trace = run(&mut sim, &mut backend, "notes_new_memo", DeployConfig::default());
    assert_eq!(trace.wall_rounds, 5);
    assert_eq!(trace.terminated_by, TerminatedBy::StopAction);
    assert_eq!(trace.final_goal_satisfied, Some(true));
    assert_eq!(backend.remaining(), 0);
    assert!(trace.agent_steps().all(|s| s.used_documents.is_empty()));
}

#[test]
fn summary_of_each_round_reaches_the_next_prompt() {
    let mut sim = sim();
    let mut backend = task_script("share_number_cross_app");
    let trace = run(&mut sim, &mut backend, "share_number_cross_app", DeployConfig::default());
    let prompts = backend.transcript();
    let steps: Vec<_> = trace.agent_steps().collect();
    assert_eq!(prompts.len(), steps.len());
    for i in 1..steps.len() {
        let summary = &steps[i - 1].turn.as_ref().unwrap().summary;
        assert!(prompts[i].contains(summary.as_str()), "round {} prompt lacks {summary:?}", i + 1);
    }
}

#[test]
fn opened_composer_summary_carries_over() {
    let mut sim = sim();
    let mut backend = ScriptedBackend::new(vec![
        ScriptEntry::reply(turn("TapButton(\"notes\")", "opened composer")),
        ScriptEntry::expecting("opened composer", turn("Stop()", "done")),
    ]);
    let trace = run(&mut sim, &mut backend, "notes_new_memo", DeployConfig::default());
    assert_eq!(trace.wall_rounds, 2);
}

#[test]
fn missing_summary_keeps_the_previous_one() {
    let mut sim = sim();
    let mut backend = ScriptedBackend::new(vec![
        ScriptEntry::reply(turn("Wait()", "first look")),
        ScriptEntry::reply("Action: Wait()"),
        ScriptEntry::expecting("first look", turn("Stop()", "done")),
    ]);
    let trace = run(&mut sim, &mut backend, "notes_new_memo", DeployConfig::default());
    let second = trace.agent_steps().nth(1).unwrap();
    assert_eq!(second.turn.as_ref().unwrap().summary, "first look");
}

#[test]
fn resolve_error_is_fed_back() {
    let mut sim = sim();
    let mut backend = ScriptedBackend::new(vec![
        ScriptEntry::reply(turn("TapButton(9)", "tried nine")),
        ScriptEntry::expecting("Previous action TapButton(9) failed: NoSuchLabel", turn("Stop()", "done")),
    ]);
    let trace = run(&mut sim, &mut backend, "notes_new_memo", DeployConfig::default());
    let first = trace.agent_steps().next().unwrap();
    assert_eq!(first.outcome, Outcome::error("NoSuchLabel"));
    assert!(first.gesture.is_none());
    assert_eq!(trace.terminated_by, TerminatedBy::StopAction);
}

#[test]
fn unusable_reply_retries_once_then_records_no_action() {
    let mut sim = sim();
    let mut backend = ScriptedBackend::new(vec![
        ScriptEntry::reply("Action: click(2)"),
        ScriptEntry::expecting("UnknownAction", "Action: click(2)"),
        ScriptEntry::expecting("Round 1: Previous action (no action) failed: NoAction", turn("Stop()", "done")),
    ]);
    let trace = run(&mut sim, &mut backend, "notes_new_memo", DeployConfig::default());
    let first = trace.agent_steps().next().unwrap();
    assert!(first.turn.is_none());
    assert_eq!(first.outcome, Outcome::error("NoAction"));
    assert_eq!(trace.wall_rounds, 2);
}

#[test]
fn backend_exhaustion_aborts_with_partial_trace() {
    let mut sim = sim();
    let mut backend = ScriptedBackend::new(vec![ScriptEntry::reply(turn("Wait()", "w"))]);
    let trace = run(&mut sim, &mut backend, "notes_new_memo", DeployConfig::default());
    assert_eq!(trace.terminated_by, TerminatedBy::Error);
    assert_eq!(trace.wall_rounds, 1);
    assert!(trace.error.as_deref().unwrap().starts_with("ScriptExhausted"));
}

#[test]
fn matching_document_is_retrieved_into_the_prompt() {
    let mut sim = sim();
    sim.execute(&DeviceCommand::new("input tap 135 320")).unwrap();
    let screen = mobile_agent::device::capture_screen(&mut sim, 1).unwrap();
    let fab = screen.elements.iter().find(|e| e.resource_id() == Some("notes:id/fab")).unwrap();
    let mut kb = KnowledgeBase::new();
    let doc = ElementDocument::from_element("notes", "elsewhere", fab, "Starts a brand new note", ActionKind::Tap, 5);
    let id = doc.doc_id.clone();
    kb.upsert(doc).unwrap();

    let mut backend = ScriptedBackend::new(vec![ScriptEntry::expecting(
        "Starts a brand new note",
        turn("Stop()", "done"),
    )]);
    let templates = Templates::default();
    let clock = StepClock::default();
    let trace = Deployment::new(&mut sim, &mut backend, &templates, &clock)
        .with_kb(&kb)
        .run_task("t", "make a note", None);
    let step = trace.agent_steps().next().unwrap();
    assert_eq!(step.used_documents, vec![id]);
    assert_eq!(trace.final_goal_satisfied, None);
}

#[test]
fn used_documents_come_from_the_kb() {
    let mut kb = KnowledgeBase::new();
    let mut sim = sim();
    let mut seen = BTreeSet::new();
    for task in ["notes_new_memo", "notes_dark_theme"] {
        let mut s = sim.fresh();
        let mut backend = task_script(task);
        let trace = run(&mut s, &mut backend, task, DeployConfig::default());
        assert_eq!(trace.final_goal_satisfied, Some(true));
    }
    let screen = mobile_agent::device::capture_screen(&mut sim, 1).unwrap();
    for e in screen.labeled() {
        let d = ElementDocument::from_element("home", &screen.signature, e, &format!("opens {}", e.text().unwrap_or("?")), ActionKind::Tap, 1);
        seen.insert(d.doc_id.clone());
        kb.upsert(d).unwrap();
    }
    let mut backend = task_script("notes_new_memo");
    let templates = Templates::default();
    let clock = StepClock::default();
    let task = sim.suite().task("notes_new_memo").cloned().unwrap();
    let trace = Deployment::new(&mut sim, &mut backend, &templates, &clock)
        .with_kb(&kb)
        .run_task(&task.task_id, &task.instruction, Some(&task));
    assert_eq!(trace.final_goal_satisfied, Some(true));
    let used: BTreeSet<String> = trace.agent_steps().flat_map(|s| s.used_documents.clone()).collect();
    assert!(!used.is_empty());
    assert!(used.is_subset(&seen));
}

#[test]
fn cross_app_task_goes_home_between_apps() {
    let mut sim = sim();
    let mut backend = task_script("share_number_cross_app");
    let trace = run(&mut sim, &mut backend, "share_number_cross_app", DeployConfig::default());
    assert_eq!(trace.final_goal_satisfied, Some(true));
    assert_eq!(trace.terminated_by, TerminatedBy::StopAction);
    let acts = actions(&trace);
    let home = acts.iter().position(|a| a == "Home()").unwrap();
    assert!(acts[..home].contains(&"TapButton(\"contacts\")".to_string()));
    assert!(acts[home..].contains(&"TapButton(\"messages\")".to_string()));
    // The number copied in contacts is still set after switching apps.
    assert_eq!(sim.state().variables.get("copied").map(String::as_str), Some("555-0101"));
}

#[test]
fn fallback_adds_perception_elements_after_two_ineffective_rounds() {
    let mut sim = sim();
    let perception = FixturePerception::load(&sim.suite().perception_path().unwrap()).unwrap();
    let mut backend = task_script("shop_featured_to_cart");
    let templates = Templates::default();
    let clock = StepClock::default();
    let task = sim.suite().task("shop_featured_to_cart").cloned().unwrap();
    let trace = Deployment::new(&mut sim, &mut backend, &templates, &clock)
        .with_perception(&perception)
        .run_task(&task.task_id, &task.instruction, Some(&task));
    let steps: Vec<_> = trace.agent_steps().collect();
    assert_eq!(steps[1].outcome, Outcome::NoChange);
    assert_eq!(steps[2].outcome, Outcome::NoChange);
    assert!(!steps[2].fallback_active);
    assert!(steps[3].fallback_active);
    // Two confident, non-overlapping items in the perception fixture.
    assert_eq!(steps[3].element_count, steps[2].element_count + 2);
    assert!(steps[3..].iter().all(|s| s.fallback_active));
    assert_eq!(trace.final_goal_satisfied, Some(true));
    assert_eq!(trace.terminated_by, TerminatedBy::StopAction);
}

#[test]
fn without_fallback_the_promo_is_unreachable() {
    let mut sim = sim();
    sim.execute(&DeviceCommand::new("input tap 945 320")).unwrap();
    assert_eq!(sim.current_app(), "shop");
    let screen = mobile_agent::device::capture_screen(&mut sim, 1).unwrap();
    assert_eq!(screen.labeled().count(), 2);
    assert!(mobile_agent::action::resolve(&Action::TapButton(TapTarget::Label(4)), &screen, 1080, 1920).is_err());
}

fn safety_sim() -> Simulator {
    Simulator::load_suite(&safety_dir().join("suite.json")).unwrap()
}

#[test]
fn safety_fixture_human_steps_match_search() {
    let sim = safety_sim();
    let task = sim.suite().task("wallet_pay_bill").unwrap();
    assert_eq!(sim.shortest_steps(task), Some(task.human_steps));
}

const SENTINEL: &str = "ZQX-SENTINEL-7731";

#[test]
fn handoff_keeps_nothing_from_the_sensitive_screen() {
    let mut sim = safety_sim();
    let mut backend = ScriptedBackend::load(&safety_dir().join("script.json")).unwrap();
    let lines = std::fs::read_to_string(safety_dir().join("operator.txt")).unwrap();
    let mut op = ScriptedOperator::new(lines.lines().map(str::to_string));
    let templates = Templates::default();
    let clock = StepClock::default();
    let kb = KnowledgeBase::new();
    let task = sim.suite().task("wallet_pay_bill").cloned().unwrap();
    let trace = Deployment::new(&mut sim, &mut backend, &templates, &clock)
        .with_kb(&kb)
        .with_operator(&mut op)
        .run_task(&task.task_id, &task.instruction, Some(&task));

    assert_eq!(trace.terminated_by, TerminatedBy::StopAction);
    assert_eq!(trace.final_goal_satisfied, Some(true));
    let handoffs: Vec<_> = trace
        .steps
        .iter()
        .filter_map(|s| match s {
            TraceStep::Handoff(h) => Some(*h),
            _ => None,
        })
        .collect();
    assert_eq!(handoffs.len(), 1);
    assert_eq!(handoffs[0].commands_relayed, 3);
    // Handoff happened before the third backend call, not after it.
    assert_eq!(handoffs[0].round, 3);
    assert_eq!(trace.agent_steps().count(), 3);
    assert_eq!(op.notices, vec![SAFETY_NOTICE.to_string()]);

    for p in backend.transcript() {
        assert!(!p.contains(SENTINEL));
        assert!(!p.contains("4111"));
        assert!(!p.contains("Card number"));
    }
    let jsonl = trace.to_jsonl();
    assert!(!jsonl.contains(SENTINEL));
    assert!(!jsonl.contains("4111"));
    assert!(!kb.to_jsonl().contains(SENTINEL));
    assert!(kb.is_empty());
}

#[test]
fn non_interactive_mode_refuses_sensitive_screens() {
    let mut sim = safety_sim();
    let mut backend = ScriptedBackend::load(&safety_dir().join("script.json")).unwrap();
    let templates = Templates::default();
    let clock = StepClock::default();
    let trace = Deployment::new(&mut sim, &mut backend, &templates, &clock).run_task("wallet_pay_bill", "Pay the electricity bill", None);
    assert_eq!(trace.terminated_by, TerminatedBy::Error);
    assert_eq!(trace.error.as_deref(), Some("safety_requires_operator"));
    assert_eq!(backend.calls(), 2);
}

#[test]
fn operator_closing_early_aborts() {
    let mut sim = safety_sim();
    let mut backend = ScriptedBackend::load(&safety_dir().join("script.json")).unwrap();
    let mut op = ScriptedOperator::new(["input tap 540 460"]);
    let templates = Templates::default();
    let clock = StepClock::default();
    let trace = Deployment::new(&mut sim, &mut backend, &templates, &clock)
        .with_operator(&mut op)
        .run_task("wallet_pay_bill", "Pay the electricity bill", None);
    assert_eq!(trace.terminated_by, TerminatedBy::Error);
    assert_eq!(trace.error.as_deref(), Some("ClosedChannel"));
}

#[test]
fn handoff_counts_relayed_commands() {
    let mut sim = safety_sim();
    let mut op = ScriptedOperator::new(["finish"]);
    assert_eq!(manual_handoff(&mut sim, &mut op).unwrap().commands_relayed, 0);
    let before = sim.command_log().len();
    let mut op = ScriptedOperator::new(["input keyevent KEYCODE_HOME", "sleep 1", "FINISH", "input tap 1 1"]);
    assert_eq!(manual_handoff(&mut sim, &mut op).unwrap().commands_relayed, 2);
    assert_eq!(sim.command_log().len(), before + 2);
    assert_eq!(op.remaining(), 1);
    let mut op = ScriptedOperator::new(["rm -rf /", "Finish"]);
    assert_eq!(manual_handoff(&mut sim, &mut op).unwrap().commands_relayed, 0);
    assert!(op.notices[1].starts_with("rejected"));
    let mut op = ScriptedOperator::new(Vec::<String>::new());
    assert!(matches!(manual_handoff(&mut sim, &mut op), Err(HandoffError::ClosedChannel)));
}

#[test]
fn bundled_suite_screens_are_not_sensitive() {
    let suite = Suite::load(&common::suite_path()).unwrap();
    let lexicon = default_lexicon();
    for app in &suite.file.apps {
        for screen_id in app.screens.keys() {
            let els = suite.screen_elements(&app.app_id, screen_id).unwrap().to_vec();
            let v = classify_sensitive(&Screen::new(app.app_id.clone(), els, None, 0), &lexicon);
            assert!(!v.sensitive, "{}/{screen_id}: {:?}", app.app_id, v.matched_terms);
        }
    }
}

#[test]
fn trace_jsonl_round_trips() {
    let mut sim = safety_sim();
    let mut backend = ScriptedBackend::load(&safety_dir().join("script.json")).unwrap();
    let mut op = ScriptedOperator::new(["input tap 540 460", "input text 4111", "input tap 540 1700", "finish"]);
    let templates = Templates::default();
    let clock = StepClock::default();
    let trace = Deployment::new(&mut sim, &mut backend, &templates, &clock)
        .with_operator(&mut op)
        .run_task("wallet_pay_bill", "Pay the electricity bill", None);
    let text = trace.to_jsonl();
    assert_eq!(text.lines().count(), trace.steps.len() + 1);
    let back = TaskTrace::from_jsonl(&text).unwrap();
    assert_eq!(back, trace);
    assert_eq!(back.to_jsonl(), text);
    assert!(TaskTrace::from_jsonl(text.lines().next().unwrap()).is_err());
}

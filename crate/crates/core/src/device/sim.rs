use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::suite::{GestureKind, Suite, SuiteError, TaskSpec, Trigger, HOME_APP, HOME_SCREEN, INPUT_PLACEHOLDER};
use super::{Command, DeviceCommand, DeviceController, DeviceError, DeviceObservation, ExecutionReport};
use crate::ui::{screen_signature, serialize_hierarchy, UiElement};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SimState {
    pub current_app: String,
    /// Current screen of every app, retained across app switches.
    pub screens: BTreeMap<String, String>,
    pub variables: BTreeMap<String, String>,
    pub focused_element: Option<String>,
    pub command_log: Vec<String>,
}

/// Deterministic device driven by a [`Suite`]'s transition tables.
#[derive(Debug, Clone)]
pub struct Simulator {
    suite: Arc<Suite>,
    state: SimState,
}

impl Simulator {
    pub fn new(suite: Arc<Suite>) -> Self {
        let mut screens = BTreeMap::new();
        screens.insert(HOME_APP.to_string(), HOME_SCREEN.to_string());
        for (id, app) in &suite.apps {
            screens.insert(id.clone(), app.initial.clone());
        }
        Self {
            suite,
            state: SimState {
                current_app: HOME_APP.to_string(),
                screens,
                variables: BTreeMap::new(),
                focused_element: None,
                command_log: Vec::new(),
            },
        }
    }

    pub fn load_suite(path: &Path) -> Result<Self, SuiteError> {
        Ok(Self::new(Arc::new(Suite::load(path)?)))
    }

    /// A fresh simulator on the same suite.
    pub fn fresh(&self) -> Self {
        Self::new(Arc::clone(&self.suite))
    }

    pub fn suite(&self) -> &Arc<Suite> {
        &self.suite
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn current_app(&self) -> &str {
        &self.state.current_app
    }

    pub fn current_screen_id(&self) -> &str {
        &self.state.screens[&self.state.current_app]
    }

    pub fn command_log(&self) -> &[String] {
        &self.state.command_log
    }

    pub fn current_elements(&self) -> &[UiElement] {
        self.suite
            .screen_elements(self.current_app(), self.current_screen_id())
            .expect("state always points at a known screen")
    }

    pub fn signature(&self) -> String {
        screen_signature(self.current_elements())
    }

    pub fn screenshot_ref(&self) -> String {
        format!("sim://{}/{}", self.current_app(), self.current_screen_id())
    }

    pub fn apply(&mut self, cmd: &DeviceCommand) -> Result<ExecutionReport, DeviceError> {
        let parsed = cmd.parse()?;
        let before = self.signature();
        step(&self.suite, &mut self.state, &parsed);
        self.state.command_log.push(cmd.as_str().to_string());
        Ok(ExecutionReport {
            changed_screen: self.signature() != before,
        })
    }

    /// Replays command lines on a fresh simulator.
    pub fn replay<'a>(
        suite: Arc<Suite>,
        log: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self, DeviceError> {
        let mut sim = Self::new(suite);
        for line in log {
            sim.apply(&DeviceCommand::new(line))?;
        }
        Ok(sim)
    }

    pub fn goal_satisfied(&self, task: &TaskSpec) -> Result<bool, DeviceError> {
        let app = task.goal_app();
        let screen = self
            .state
            .screens
            .get(app)
            .ok_or_else(|| DeviceError::UnknownTask(format!("{}: app {app:?} not in suite", task.task_id)))?;
        Ok(goal_holds(task, screen, |v| self.state.variables.get(v).map(String::as_str)))
    }

    /// Fewest gestures from the current state to the task goal; `None` when
    /// the goal is unreachable.
    pub fn shortest_steps(&self, task: &TaskSpec) -> Option<u32> {
        super::search::shortest_steps(&self.suite, &self.state, task)
    }
}

pub(crate) fn goal_holds<'a>(
    task: &TaskSpec,
    app_screen: &str,
    var: impl Fn(&str) -> Option<&'a str>,
) -> bool {
    if let Some(required) = &task.goal.required_screen {
        if required != app_screen {
            return false;
        }
    }
    task.goal
        .required_vars
        .iter()
        .all(|(k, v)| var(k) == Some(v.as_str()))
}

/// Topmost element containing the point: the last one in document order.
pub(crate) fn hit(elements: &[UiElement], x: u32, y: u32) -> Option<&UiElement> {
    elements.iter().rev().find(|e| e.bounds.contains(x, y))
}

fn step(suite: &Suite, state: &mut SimState, cmd: &Command) {
    let app = state.current_app.clone();
    let screen = state.screens[&app].clone();
    let elements = suite
        .screen_elements(&app, &screen)
        .expect("state always points at a known screen");
    match cmd {
        Command::Tap { x, y } => {
            let Some(el) = hit(elements, *x, *y) else { return };
            let key = el.key();
            if app == HOME_APP {
                if let Some(target) = key.strip_prefix("rid:launcher:") {
                    state.current_app = target.to_string();
                    state.focused_element = None;
                }
                return;
            }
            let editable = el.editable;
            fire(suite, state, Some(key.clone()), GestureKind::Tap, None);
            if editable {
                state.focused_element = Some(key);
                clear_stale_focus(suite, state);
            }
        }
        Command::Swipe { x1, y1, x2, y2, .. } => {
            let Some(el) = hit(elements, *x1, *y1) else { return };
            let gesture = swipe_kind(*x1, *y1, *x2, *y2);
            fire(suite, state, Some(el.key()), gesture, None);
        }
        Command::Text(s) => {
            if let Some(key) = state.focused_element.clone() {
                fire(suite, state, Some(key), GestureKind::TextInput, Some(s));
            }
        }
        Command::KeyBack => {
            fire(suite, state, None, GestureKind::Back, None);
        }
        Command::KeyHome => {
            state.current_app = HOME_APP.to_string();
            state.focused_element = None;
        }
        Command::Sleep(_) | Command::Dump => {}
    }
}

pub(crate) fn swipe_kind(x1: u32, y1: u32, x2: u32, y2: u32) -> GestureKind {
    let dx = i64::from(x2) - i64::from(x1);
    let dy = i64::from(y2) - i64::from(y1);
    if dx == 0 && dy == 0 {
        GestureKind::LongPress
    } else if dx.abs() > dy.abs() {
        if dx < 0 {
            GestureKind::SwipeLeft
        } else {
            GestureKind::SwipeRight
        }
    } else if dy < 0 {
        GestureKind::SwipeUp
    } else {
        GestureKind::SwipeDown
    }
}

/// Fires the transition for `(current screen, trigger)` if one is declared.
fn fire(
    suite: &Suite,
    state: &mut SimState,
    element_key: Option<String>,
    gesture: GestureKind,
    input: Option<&str>,
) {
    let app = state.current_app.clone();
    let Some(compiled) = suite.apps.get(&app) else { return };
    let from = state.screens[&app].clone();
    let trigger = Trigger { element_key, gesture };
    let Some(t) = compiled.transitions.get(&(from, trigger)) else { return };
    for eff in &t.effects {
        let value = match input {
            Some(text) if eff.value == INPUT_PLACEHOLDER => text.to_string(),
            _ => eff.value.clone(),
        };
        state.variables.insert(eff.var.clone(), value);
    }
    state.screens.insert(app, t.to.clone());
    clear_stale_focus(suite, state);
}

fn clear_stale_focus(suite: &Suite, state: &mut SimState) {
    if let Some(key) = &state.focused_element {
        let app = &state.current_app;
        let present = suite
            .screen_elements(app, &state.screens[app])
            .is_some_and(|els| els.iter().any(|e| &e.key() == key));
        if !present {
            state.focused_element = None;
        }
    }
}

impl DeviceController for Simulator {
    fn capture(&mut self) -> Result<DeviceObservation, DeviceError> {
        Ok(DeviceObservation {
            hierarchy_xml: serialize_hierarchy(self.current_elements(), self.current_app()),
            screenshot_ref: self.screenshot_ref(),
            current_app: self.current_app().to_string(),
        })
    }

    fn execute(&mut self, cmd: &DeviceCommand) -> Result<ExecutionReport, DeviceError> {
        self.apply(cmd)
    }

    fn screen_size(&self) -> (u32, u32) {
        let s = self.suite.screen_size();
        (s.width, s.height)
    }

    fn simulator(&self) -> Option<&Simulator> {
        Some(self)
    }
}

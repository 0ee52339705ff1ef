//! Declarative simulator suites: apps as screen/transition tables, plus the
//! tasks evaluated against them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::action::{parse_action, render_action};
use crate::ui::{Bounds, UiElement};

pub const HOME_APP: &str = "home";
pub const HOME_SCREEN: &str = "home";
/// Effect value replaced by the typed text of a `text_input` trigger.
pub const INPUT_PLACEHOLDER: &str = "$input";

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error("reading suite {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("SchemaError at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("DuplicateTransition in app {app}: screen {from:?} already has a transition on {trigger}")]
    DuplicateTransition {
        app: String,
        from: String,
        trigger: String,
    },
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> SuiteError {
    SuiteError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreenSize {
    pub width: u32,
    pub height: u32,
}

impl Default for ScreenSize {
    fn default() -> Self {
        Self {
            width: 1080,
            height: 1920,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementSpec {
    #[serde(default)]
    pub resource_id: Option<String>,
    pub class_name: String,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub content_desc: Option<String>,
    pub bounds: Bounds,
    #[serde(default)]
    pub clickable: bool,
    #[serde(default)]
    pub long_clickable: bool,
    #[serde(default)]
    pub scrollable: bool,
}

impl ElementSpec {
    pub fn to_element(&self) -> UiElement {
        let mut e = UiElement::new(self.class_name.clone(), self.bounds);
        e.resource_id = self.resource_id.clone().filter(|s| !s.is_empty());
        e.text = self.text.clone().filter(|s| !s.is_empty());
        e.content_desc = self.content_desc.clone().filter(|s| !s.is_empty());
        e.clickable = self.clickable;
        e.long_clickable = self.long_clickable;
        e.scrollable = self.scrollable;
        e.editable = self.class_name.contains("EditText");
        e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreenSpec {
    pub elements: Vec<ElementSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureKind {
    Tap,
    LongPress,
    SwipeUp,
    SwipeDown,
    SwipeLeft,
    SwipeRight,
    TextInput,
    Back,
}

impl GestureKind {
    pub fn needs_element(self) -> bool {
        self != GestureKind::Back
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trigger {
    #[serde(default)]
    pub element_key: Option<String>,
    pub gesture: GestureKind,
}

impl std::fmt::Display for Trigger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.element_key {
            Some(k) => write!(f, "{:?} on {k}", self.gesture),
            None => write!(f, "{:?}", self.gesture),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Effect {
    pub var: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionSpec {
    pub from: String,
    pub on: Trigger,
    pub to: String,
    #[serde(default)]
    pub effects: Vec<Effect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimAppSpec {
    pub app_id: String,
    pub initial: String,
    pub screens: BTreeMap<String, ScreenSpec>,
    #[serde(default)]
    pub transitions: Vec<TransitionSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalSpec {
    /// App whose current screen is checked; defaults to the task's last app.
    #[serde(default)]
    pub app: Option<String>,
    #[serde(default)]
    pub required_screen: Option<String>,
    #[serde(default)]
    pub required_vars: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task_id: String,
    pub instruction: String,
    #[serde(deserialize_with = "one_or_many")]
    pub app_id: Vec<String>,
    #[serde(default)]
    pub goal: GoalSpec,
    pub human_steps: u32,
    #[serde(default)]
    pub human_path: Option<Vec<String>>,
    /// Canonical rendered actions of a correct run, for the prefix metric.
    #[serde(default)]
    pub reference_actions: Option<Vec<String>>,
}

impl TaskSpec {
    pub fn goal_app(&self) -> &str {
        self.goal
            .app
            .as_deref()
            .or(self.app_id.last().map(String::as_str))
            .unwrap_or(HOME_APP)
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(String),
        Many(Vec<String>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteFile {
    #[serde(default)]
    pub screen: ScreenSize,
    /// Perception fixture path, relative to the suite file.
    #[serde(default)]
    pub perception: Option<String>,
    pub apps: Vec<SimAppSpec>,
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
}

/// Validated, indexed suite ready for simulation.
#[derive(Debug, Clone)]
pub struct Suite {
    pub file: SuiteFile,
    pub base_dir: PathBuf,
    pub(crate) apps: BTreeMap<String, CompiledApp>,
    pub(crate) app_order: Vec<String>,
    pub(crate) home_elements: Vec<UiElement>,
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledApp {
    pub initial: String,
    pub screens: BTreeMap<String, Vec<UiElement>>,
    pub transitions: HashMap<(String, Trigger), TransitionSpec>,
}

impl Suite {
    pub fn load(path: &Path) -> Result<Self, SuiteError> {
        let text = std::fs::read_to_string(path).map_err(|source| SuiteError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    pub fn from_json(json: &str, base_dir: PathBuf) -> Result<Self, SuiteError> {
        let de = &mut serde_json::Deserializer::from_str(json);
        let file: SuiteFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            schema(path, e.into_inner().to_string())
        })?;
        Self::compile(file, base_dir)
    }

    pub fn compile(file: SuiteFile, base_dir: PathBuf) -> Result<Self, SuiteError> {
        if file.screen.width == 0 || file.screen.height == 0 {
            return Err(schema("screen", "width and height must be positive"));
        }
        let mut apps = BTreeMap::new();
        let mut app_order = Vec::new();
        for (ai, app) in file.apps.iter().enumerate() {
            let at = format!("apps[{ai}]");
            if app.app_id.is_empty() || app.app_id == HOME_APP {
                return Err(schema(
                    format!("{at}.app_id"),
                    format!("app id {:?} is empty or reserved", app.app_id),
                ));
            }
            if apps.contains_key(&app.app_id) {
                return Err(schema(format!("{at}.app_id"), format!("duplicate app {:?}", app.app_id)));
            }
            if !app.screens.contains_key(&app.initial) {
                return Err(schema(
                    format!("{at}.initial"),
                    format!("unknown screen {:?}", app.initial),
                ));
            }
            let mut screens = BTreeMap::new();
            for (sid, spec) in &app.screens {
                let mut elements = Vec::new();
                for (ei, es) in spec.elements.iter().enumerate() {
                    let bounds = es.bounds;
                    if bounds.area() == 0
                        || bounds.x2 > file.screen.width
                        || bounds.y2 > file.screen.height
                    {
                        return Err(schema(
                            format!("{at}.screens.{sid}.elements[{ei}].bounds"),
                            format!("{bounds} is empty or off screen"),
                        ));
                    }
                    elements.push(es.to_element());
                }
                screens.insert(sid.clone(), elements);
            }
            let mut transitions = HashMap::new();
            for (ti, t) in app.transitions.iter().enumerate() {
                let tat = format!("{at}.transitions[{ti}]");
                let Some(from_elements) = screens.get(&t.from) else {
                    return Err(schema(format!("{tat}.from"), format!("unknown screen {:?}", t.from)));
                };
                if !screens.contains_key(&t.to) {
                    return Err(schema(format!("{tat}.to"), format!("unknown screen {:?}", t.to)));
                }
                match (&t.on.element_key, t.on.gesture.needs_element()) {
                    (Some(key), true) => {
                        if !from_elements.iter().any(|e| &e.key() == key) {
                            return Err(schema(
                                format!("{tat}.on.element_key"),
                                format!("no element {key:?} on screen {:?}", t.from),
                            ));
                        }
                    }
                    (None, true) => {
                        return Err(schema(
                            format!("{tat}.on.element_key"),
                            format!("{:?} trigger needs an element_key", t.on.gesture),
                        ))
                    }
                    (Some(_), false) => {
                        return Err(schema(
                            format!("{tat}.on.element_key"),
                            "back trigger takes no element_key",
                        ))
                    }
                    (None, false) => {}
                }
                for (fi, eff) in t.effects.iter().enumerate() {
                    if eff.var.is_empty() {
                        return Err(schema(format!("{tat}.effects[{fi}].var"), "empty variable name"));
                    }
                }
                let key = (t.from.clone(), t.on.clone());
                if transitions.contains_key(&key) {
                    return Err(SuiteError::DuplicateTransition {
                        app: app.app_id.clone(),
                        from: t.from.clone(),
                        trigger: t.on.to_string(),
                    });
                }
                transitions.insert(key, t.clone());
            }
            app_order.push(app.app_id.clone());
            apps.insert(
                app.app_id.clone(),
                CompiledApp {
                    initial: app.initial.clone(),
                    screens,
                    transitions,
                },
            );
        }

        let mut seen = HashSet::new();
        for (ti, task) in file.tasks.iter().enumerate() {
            let at = format!("tasks[{ti}]");
            if !seen.insert(task.task_id.clone()) {
                return Err(schema(format!("{at}.task_id"), format!("duplicate task {:?}", task.task_id)));
            }
            if task.human_steps < 1 {
                return Err(schema(format!("{at}.human_steps"), "must be >= 1"));
            }
            if task.app_id.is_empty() {
                return Err(schema(format!("{at}.app_id"), "no app given"));
            }
            for (i, a) in task.app_id.iter().enumerate() {
                if !apps.contains_key(a) {
                    return Err(schema(format!("{at}.app_id[{i}]"), format!("unknown app {a:?}")));
                }
            }
            let goal_app = task.goal_app();
            match apps.get(goal_app) {
                None => return Err(schema(format!("{at}.goal.app"), format!("unknown app {goal_app:?}"))),
                Some(app) => {
                    if let Some(s) = &task.goal.required_screen {
                        if !app.screens.contains_key(s) {
                            return Err(schema(
                                format!("{at}.goal.required_screen"),
                                format!("unknown screen {s:?} in app {goal_app:?}"),
                            ));
                        }
                    }
                }
            }
            if let Some(refs) = &task.reference_actions {
                for (i, r) in refs.iter().enumerate() {
                    if let Err(e) = parse_action(r) {
                        return Err(schema(format!("{at}.reference_actions[{i}]"), e.to_string()));
                    }
                }
            }
        }

        let home_elements = launcher_elements(&app_order, file.screen);
        Ok(Self {
            file,
            base_dir,
            apps,
            app_order,
            home_elements,
        })
    }

    pub fn screen_size(&self) -> ScreenSize {
        self.file.screen
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.file.tasks
    }

    pub fn task(&self, task_id: &str) -> Option<&TaskSpec> {
        self.file.tasks.iter().find(|t| t.task_id == task_id)
    }

    pub fn app_ids(&self) -> &[String] {
        &self.app_order
    }

    pub fn has_app(&self, app_id: &str) -> bool {
        app_id == HOME_APP || self.apps.contains_key(app_id)
    }

    pub fn perception_path(&self) -> Option<PathBuf> {
        self.file.perception.as_ref().map(|p| self.base_dir.join(p))
    }

    /// Elements of a screen, or `None` for an unknown app/screen. The home
    /// app has the single screen [`HOME_SCREEN`].
    pub fn screen_elements(&self, app_id: &str, screen_id: &str) -> Option<&[UiElement]> {
        if app_id == HOME_APP {
            return (screen_id == HOME_SCREEN).then_some(self.home_elements.as_slice());
        }
        self.apps.get(app_id)?.screens.get(screen_id).map(Vec::as_slice)
    }

    /// Reference actions rendered canonically.
    pub fn canonical_references(task: &TaskSpec) -> Option<Vec<String>> {
        task.reference_actions.as_ref().map(|refs| {
            refs.iter()
                .filter_map(|r| parse_action(r).ok())
                .map(|a| render_action(&a))
                .collect()
        })
    }
}

/// One launcher icon per app, four to a row.
fn launcher_elements(apps: &[String], size: ScreenSize) -> Vec<UiElement> {
    let cols = 4u32;
    let cell_w = size.width / cols;
    let cell_h = 300u32;
    apps.iter()
        .enumerate()
        .map(|(i, app)| {
            let (col, row) = (i as u32 % cols, i as u32 / cols);
            let x1 = col * cell_w + cell_w / 10;
            let y1 = 200 + row * cell_h;
            let bounds = Bounds::new(x1, y1, x1 + cell_w * 8 / 10, y1 + cell_h * 8 / 10)
                .expect("launcher cell");
            let mut e = UiElement::new("android.widget.TextView", bounds);
            e.resource_id = Some(format!("launcher:{app}"));
            e.text = Some(app.clone());
            e.clickable = true;
            e
        })
        .collect()
}

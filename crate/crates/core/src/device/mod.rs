//! Device-controller contract over a line-oriented command schema, with a
//! deterministic simulator and an ADB adapter speaking the same lines.

mod adb;
mod command;
mod search;
mod sim;
mod suite;

use serde::{Deserialize, Serialize};

use crate::ui::{parse_hierarchy, Screen, UiError};

pub use adb::{AdbDevice, AdbTransport, ProcessTransport};
pub use command::{escape_text, unescape_text, Command, DeviceCommand};
pub use search::MAX_SEARCH_STATES;
pub use sim::{SimState, Simulator};
pub use suite::{
    Effect, ElementSpec, GestureKind, GoalSpec, ScreenSize, ScreenSpec, SimAppSpec, Suite,
    SuiteError, SuiteFile, TaskSpec, TransitionSpec, Trigger, HOME_APP, HOME_SCREEN,
    INPUT_PLACEHOLDER,
};

#[derive(Debug, thiserror::Error)]
pub enum DeviceError {
    #[error("BadCommand: {0}")]
    BadCommand(String),
    #[error("DeviceUnavailable: {0}")]
    DeviceUnavailable(String),
    #[error("UnknownTask: {0}")]
    UnknownTask(String),
    #[error("captured hierarchy did not parse: {0}")]
    Hierarchy(#[from] UiError),
}

impl DeviceError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::BadCommand(_) => "BadCommand",
            Self::DeviceUnavailable(_) => "DeviceUnavailable",
            Self::UnknownTask(_) => "UnknownTask",
            Self::Hierarchy(_) => "MalformedHierarchy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceObservation {
    pub hierarchy_xml: String,
    pub screenshot_ref: String,
    pub current_app: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub changed_screen: bool,
}

/// One logical device session. Calls are strictly sequential.
pub trait DeviceController: Send {
    fn capture(&mut self) -> Result<DeviceObservation, DeviceError>;

    fn execute(&mut self, cmd: &DeviceCommand) -> Result<ExecutionReport, DeviceError>;

    /// Width and height in pixels.
    fn screen_size(&self) -> (u32, u32);

    /// The simulator behind this controller, when there is one. Gives the
    /// deployment loop access to the goal oracle.
    fn simulator(&self) -> Option<&Simulator> {
        None
    }
}

/// Captures and parses the current screen.
pub fn capture_screen(
    device: &mut dyn DeviceController,
    captured_at: u64,
) -> Result<Screen, DeviceError> {
    let obs = device.capture()?;
    let elements = parse_hierarchy(&obs.hierarchy_xml)?;
    Ok(Screen::new(
        obs.current_app,
        elements,
        Some(obs.screenshot_ref),
        captured_at,
    ))
}

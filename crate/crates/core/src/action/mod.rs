//! The eight-action vocabulary with its call syntax. Symbolic actions resolve
//! to coordinate gestures, which lower to device commands.

mod lower;
mod parse;
mod resolve;

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use crate::device::DeviceCommand;
pub use lower::gesture_to_commands;
pub use parse::{parse_action, ActionParseError};
pub use resolve::{resolve, resolve_with, Gesture, ResolveConfig, ResolveError};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TapTarget {
    Label(u32),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Self::Up, Self::Down, Self::Left, Self::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Up => "up",
            Self::Down => "down",
            Self::Left => "left",
            Self::Right => "right",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.as_str().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Short,
    Medium,
    Long,
}

impl Distance {
    pub const ALL: [Distance; 3] = [Self::Short, Self::Medium, Self::Long];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Short => "short",
            Self::Medium => "medium",
            Self::Long => "long",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.as_str().eq_ignore_ascii_case(s))
    }

    /// Fraction of the available axis extent covered by the swipe.
    pub fn fraction(self) -> f64 {
        match self {
            Self::Short => 0.25,
            Self::Medium => 0.5,
            Self::Long => 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Action {
    TapButton(TapTarget),
    Text(String),
    LongPress(u32),
    Swipe {
        label: u32,
        direction: Direction,
        dist: Distance,
    },
    Back,
    Home,
    Wait,
    Stop,
}

/// Coarse action category, used as part of useless-list identity and for the
/// `action_kinds` of knowledge-base documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Tap,
    LongPress,
    Swipe,
    Text,
    Back,
    Home,
    Wait,
    Stop,
}

impl ActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Tap => "tap",
            Self::LongPress => "long_press",
            Self::Swipe => "swipe",
            Self::Text => "text",
            Self::Back => "back",
            Self::Home => "home",
            Self::Wait => "wait",
            Self::Stop => "stop",
        }
    }

    /// Kinds that act on a specific element and so can be documented.
    pub fn targets_element(self) -> bool {
        matches!(self, Self::Tap | Self::LongPress | Self::Swipe | Self::Text)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Self::TapButton(_) => ActionKind::Tap,
            Self::Text(_) => ActionKind::Text,
            Self::LongPress(_) => ActionKind::LongPress,
            Self::Swipe { .. } => ActionKind::Swipe,
            Self::Back => ActionKind::Back,
            Self::Home => ActionKind::Home,
            Self::Wait => ActionKind::Wait,
            Self::Stop => ActionKind::Stop,
        }
    }

    /// Canonical call syntax: PascalCase name, bare integers, double-quoted strings.
    pub fn render(&self) -> String {
        render_action(self)
    }
}

pub fn render_action(a: &Action) -> String {
    match a {
        Action::TapButton(TapTarget::Label(n)) => format!("TapButton({n})"),
        Action::TapButton(TapTarget::Text(t)) => format!("TapButton({})", quote(t)),
        Action::Text(t) => format!("Text({})", quote(t)),
        Action::LongPress(n) => format!("LongPress({n})"),
        Action::Swipe {
            label,
            direction,
            dist,
        } => format!(
            "Swipe({label}, {}, {})",
            quote(direction.as_str()),
            quote(dist.as_str())
        ),
        Action::Back => "Back()".into(),
        Action::Home => "Home()".into(),
        Action::Wait => "Wait()".into(),
        Action::Stop => "Stop()".into(),
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_action(self))
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&render_action(self))
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_action(&s).map_err(serde::de::Error::custom)
    }
}

/// Description of the action vocabulary embedded in every prompt.
pub const ACTION_SPACE_DOC: &str = include_str!("../../templates/action_space.txt");

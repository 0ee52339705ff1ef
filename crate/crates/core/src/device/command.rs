use std::fmt;

use serde::{Deserialize, Serialize};

use super::DeviceError;

/// One line of the device wire protocol (ADB shell compatible).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceCommand(pub String);

impl DeviceCommand {
    pub fn new(line: impl Into<String>) -> Self {
        Self(line.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn parse(&self) -> Result<Command, DeviceError> {
        Command::parse(&self.0)
    }
}

impl fmt::Display for DeviceCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&Command> for DeviceCommand {
    fn from(c: &Command) -> Self {
        Self(c.to_string())
    }
}

/// Parsed form of a [`DeviceCommand`]. `Text` holds the un-escaped string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Tap {
        x: u32,
        y: u32,
    },
    Swipe {
        x1: u32,
        y1: u32,
        x2: u32,
        y2: u32,
        duration_ms: u32,
    },
    Text(String),
    KeyBack,
    KeyHome,
    Sleep(u32),
    Dump,
}

impl Command {
    pub fn parse(line: &str) -> Result<Command, DeviceError> {
        let bad = |why: &str| DeviceError::BadCommand(format!("{why}: {line:?}"));
        if line == "input text" {
            return Ok(Command::Text(String::new()));
        }
        if let Some(payload) = line.strip_prefix("input text ") {
            return unescape_text(payload)
                .map(Command::Text)
                .ok_or_else(|| bad("bad text escape"));
        }
        let tokens: Vec<&str> = line.split(' ').collect();
        let ints = |parts: &[&str]| -> Result<Vec<u32>, DeviceError> {
            parts
                .iter()
                .map(|p| {
                    if !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit()) {
                        p.parse::<u32>().map_err(|_| bad("integer out of range"))
                    } else {
                        Err(bad("expected an integer"))
                    }
                })
                .collect()
        };
        match tokens.as_slice() {
            ["input", "tap", rest @ ..] if rest.len() == 2 => {
                let v = ints(rest)?;
                Ok(Command::Tap { x: v[0], y: v[1] })
            }
            ["input", "swipe", rest @ ..] if rest.len() == 5 => {
                let v = ints(rest)?;
                Ok(Command::Swipe {
                    x1: v[0],
                    y1: v[1],
                    x2: v[2],
                    y2: v[3],
                    duration_ms: v[4],
                })
            }
            ["input", "keyevent", "KEYCODE_BACK"] => Ok(Command::KeyBack),
            ["input", "keyevent", "KEYCODE_HOME"] => Ok(Command::KeyHome),
            ["sleep", ms] => Ok(Command::Sleep(ints(&[ms])?[0])),
            ["uiautomator", "dump"] => Ok(Command::Dump),
            _ => Err(bad("not in the command grammar")),
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Tap { x, y } => write!(f, "input tap {x} {y}"),
            Command::Swipe {
                x1,
                y1,
                x2,
                y2,
                duration_ms,
            } => write!(f, "input swipe {x1} {y1} {x2} {y2} {duration_ms}"),
            Command::Text(t) => write!(f, "input text {}", escape_text(t)),
            Command::KeyBack => f.write_str("input keyevent KEYCODE_BACK"),
            Command::KeyHome => f.write_str("input keyevent KEYCODE_HOME"),
            Command::Sleep(ms) => write!(f, "sleep {ms}"),
            Command::Dump => f.write_str("uiautomator dump"),
        }
    }
}

/// `input text` escaping: space becomes `%s`; `%` and `\` are
/// backslash-escaped; newline, tab and carriage return become `\n`, `\t`, `\r`.
pub fn escape_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            ' ' => out.push_str("%s"),
            '%' => out.push_str("\\%"),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

/// Inverse of [`escape_text`]. Returns `None` on a dangling escape.
pub fn unescape_text(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next()? {
                'n' => out.push('\n'),
                't' => out.push('\t'),
                'r' => out.push('\r'),
                other => out.push(other),
            },
            '%' => {
                let mut look = chars.clone();
                if look.next() == Some('s') {
                    chars = look;
                    out.push(' ');
                } else {
                    out.push('%');
                }
            }
            c => out.push(c),
        }
    }
    Some(out)
}

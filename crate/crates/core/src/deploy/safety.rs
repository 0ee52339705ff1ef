use std::collections::VecDeque;
use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::device::{DeviceCommand, DeviceController, DeviceError};
use crate::ui::Screen;

pub const DEFAULT_LEXICON: &[&str] = &[
    "password",
    "passwd",
    "pin",
    "cvv",
    "otp",
    "card number",
    "pay now",
    "verification code",
];

pub const SAFETY_NOTICE: &str = "This screen asks for sensitive information. Manual control is active: \
enter device commands one per line, then type finish to hand control back.";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyVerdict {
    pub sensitive: bool,
    pub matched_terms: Vec<String>,
}

pub fn default_lexicon() -> Vec<String> {
    DEFAULT_LEXICON.iter().map(|s| s.to_string()).collect()
}

/// One term per line; blank lines and `#` comments are ignored.
pub fn load_lexicon(path: &Path) -> io::Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect())
}

/// Case-insensitive substring match of each term against every element's
/// text, content description and resource id. Terms are reported once, in
/// lexicon order.
pub fn classify_sensitive(screen: &Screen, lexicon: &[String]) -> SafetyVerdict {
    let haystacks: Vec<String> = screen
        .elements
        .iter()
        .flat_map(|e| [e.text(), e.content_desc(), e.resource_id()])
        .flatten()
        .map(str::to_lowercase)
        .collect();
    let mut matched_terms: Vec<String> = Vec::new();
    for term in lexicon {
        let t = term.to_lowercase();
        if t.is_empty() || matched_terms.contains(&t) {
            continue;
        }
        if haystacks.iter().any(|h| h.contains(&t)) {
            matched_terms.push(t);
        }
    }
    SafetyVerdict {
        sensitive: !matched_terms.is_empty(),
        matched_terms,
    }
}

/// The person who takes over during a safety handoff.
pub trait OperatorChannel: Send {
    fn notify(&mut self, message: &str);
    /// Next line from the operator, or `None` when the channel has closed.
    fn read_line(&mut self) -> Option<String>;
}

/// Operator on the process's stdin and stderr.
#[derive(Debug, Default)]
pub struct StdioOperator;

impl OperatorChannel for StdioOperator {
    fn notify(&mut self, message: &str) {
        let mut err = io::stderr().lock();
        let _ = writeln!(err, "{message}");
        let _ = write!(err, "> ");
        let _ = err.flush();
    }

    fn read_line(&mut self) -> Option<String> {
        let mut line = String::new();
        match io::stdin().lock().read_line(&mut line) {
            Ok(0) | Err(_) => None,
            Ok(_) => Some(line.trim_end_matches(['\r', '\n']).to_string()),
        }
    }
}

/// Operator replaying fixed lines; records what it was told.
#[derive(Debug, Default)]
pub struct ScriptedOperator {
    lines: VecDeque<String>,
    pub notices: Vec<String>,
}

impl ScriptedOperator {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(lines: I) -> Self {
        Self {
            lines: lines.into_iter().map(Into::into).collect(),
            notices: Vec::new(),
        }
    }

    pub fn remaining(&self) -> usize {
        self.lines.len()
    }
}

impl OperatorChannel for ScriptedOperator {
    fn notify(&mut self, message: &str) {
        self.notices.push(message.to_string());
    }

    fn read_line(&mut self) -> Option<String> {
        self.lines.pop_front()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandoffReport {
    pub commands_relayed: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum HandoffError {
    #[error("ClosedChannel: operator input ended before \"finish\"")]
    ClosedChannel,
    #[error(transparent)]
    Device(DeviceError),
}

/// Relays operator lines to the device until a case-insensitive `finish`.
/// Rejected lines are reported back to the operator and not counted.
pub fn manual_handoff(
    device: &mut dyn DeviceController,
    operator: &mut dyn OperatorChannel,
) -> Result<HandoffReport, HandoffError> {
    operator.notify(SAFETY_NOTICE);
    let mut relayed = 0;
    loop {
        let line = operator.read_line().ok_or(HandoffError::ClosedChannel)?;
        let line = line.trim();
        if line.eq_ignore_ascii_case("finish") {
            return Ok(HandoffReport { commands_relayed: relayed });
        }
        if line.is_empty() {
            continue;
        }
        match device.execute(&DeviceCommand::new(line)) {
            Ok(_) => relayed += 1,
            Err(e @ DeviceError::BadCommand(_)) => operator.notify(&format!("rejected: {e}")),
            Err(e) => return Err(HandoffError::Device(e)),
        }
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatMessage, LlmError};

const EXCERPT_CHARS: usize = 240;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_substring: Option<String>,
    pub reply: String,
}

impl ScriptEntry {
    pub fn reply(reply: impl Into<String>) -> Self {
        Self {
            expect_substring: None,
            reply: reply.into(),
        }
    }

    pub fn expecting(expect: impl Into<String>, reply: impl Into<String>) -> Self {
        Self {
            expect_substring: Some(expect.into()),
            reply: reply.into(),
        }
    }
}

/// Replays canned replies in order and records every prompt it receives.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
    transcript: Vec<String>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self {
            entries,
            transcript: Vec::new(),
        }
    }

    pub fn from_json(json: &str) -> Result<Self, LlmError> {
        serde_json::from_str(json)
            .map(Self::new)
            .map_err(|e| LlmError::BadScript(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::BadScript(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn calls(&self) -> usize {
        self.transcript.len()
    }

    pub fn remaining(&self) -> usize {
        self.entries.len().saturating_sub(self.transcript.len())
    }

    /// Prompts received so far, one per call, messages joined by blank lines.
    pub fn transcript(&self) -> &[String] {
        &self.transcript
    }
}

/// Tail of the prompt, where the per-round context sits.
fn excerpt(prompt: &str) -> String {
    let chars: Vec<char> = prompt.chars().collect();
    let start = chars.len().saturating_sub(EXCERPT_CHARS);
    chars[start..].iter().collect()
}

impl ChatBackend for ScriptedBackend {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let call = self.transcript.len();
        let prompt = messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n\n");
        self.transcript.push(prompt);
        let prompt = &self.transcript[call];
        let Some(entry) = self.entries.get(call) else {
            return Err(LlmError::ScriptExhausted { call: call + 1 });
        };
        if let Some(expected) = &entry.expect_substring {
            if !prompt.contains(expected.as_str()) {
                return Err(LlmError::ScriptMismatch {
                    call: call + 1,
                    expected: expected.clone(),
                    excerpt: excerpt(prompt),
                });
            }
        }
        Ok(entry.reply.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn third_call_on_two_replies_is_exhausted() {
        let mut b = ScriptedBackend::new(vec![ScriptEntry::reply("a"), ScriptEntry::reply("b")]);
        let m = [ChatMessage::user("hi")];
        assert_eq!(b.complete(&m).unwrap(), "a");
        assert_eq!(b.complete(&m).unwrap(), "b");
        assert!(matches!(b.complete(&m), Err(LlmError::ScriptExhausted { call: 3 })));
    }

    #[test]
    fn expectation_is_checked() {
        let mut b = ScriptedBackend::new(vec![ScriptEntry::expecting("compose", "ok")]);
        let err = b.complete(&[ChatMessage::user("inbox screen")]).unwrap_err();
        assert_eq!(err.kind(), "ScriptMismatch");
        assert_eq!(b.transcript(), ["inbox screen".to_string()]);
    }

    #[test]
    fn parses_script_files() {
        let b = ScriptedBackend::from_json(r#"[{"reply": "x"}, {"expect_substring": "y", "reply": "z"}]"#).unwrap();
        assert_eq!(b.remaining(), 2);
        assert!(ScriptedBackend::from_json(r#"[{"text": "x"}]"#).is_err());
    }

    #[test]
    fn same_script_same_outputs() {
        let script = vec![ScriptEntry::reply("1"), ScriptEntry::reply("2")];
        let run = || {
            let mut b = ScriptedBackend::new(script.clone());
            (0..2).map(|_| b.complete(&[ChatMessage::user("p")]).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}

//! Chat backends and prompt templates. Replies follow the
//! observation/thought/action/summary turn format.

mod http;
mod scripted;
mod template;
mod turn;

use serde::{Deserialize, Serialize};

pub use http::{HttpBackend, HttpConfig, DEFAULT_TIMEOUT_SECS};
pub use scripted::{ScriptEntry, ScriptedBackend};
pub use template::{PromptTemplate, TemplateError, TemplateId, Templates, PLACEHOLDERS};
pub use turn::{parse_turn, TurnError, TurnOutput, PREVIOUS_SUMMARY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    /// Screenshot reference; kept in traces, not sent by the bundled backends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
            image_ref: None,
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn with_image(mut self, image_ref: Option<String>) -> Self {
        self.image_ref = image_ref;
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("BackendError: {0}")]
    Backend(String),
    #[error("ScriptExhausted: no reply left for call {call}")]
    ScriptExhausted { call: usize },
    #[error("ScriptMismatch at call {call}: expected prompt to contain {expected:?}; prompt excerpt: {excerpt:?}")]
    ScriptMismatch {
        call: usize,
        expected: String,
        excerpt: String,
    },
    #[error("BadScript: {0}")]
    BadScript(String),
}

impl LlmError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Backend(_) => "BackendError",
            Self::ScriptExhausted { .. } => "ScriptExhausted",
            Self::ScriptMismatch { .. } => "ScriptMismatch",
            Self::BadScript(_) => "BadScript",
        }
    }
}

/// One chat session. Implementations may keep per-session state.
pub trait ChatBackend: Send {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, LlmError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        (**self).complete(messages)
    }
}

/// Sends `prompt` as a single user message and parses the reply. A reply with
/// no usable action is re-prompted once with the parse error appended; the
/// inner error is the second failure.
pub fn request_turn(
    backend: &mut dyn ChatBackend,
    prompt: &str,
    image_ref: Option<&str>,
) -> Result<Result<TurnOutput, TurnError>, LlmError> {
    let image = image_ref.map(str::to_string);
    let reply = backend.complete(&[ChatMessage::user(prompt).with_image(image.clone())])?;
    match parse_turn(&reply) {
        Ok(t) => Ok(Ok(t)),
        Err(e) => {
            log::warn!("unusable reply, retrying once: {e}");
            let retry = format!(
                "{prompt}\n\nYour previous reply was rejected: {e}\nReply again in the response format."
            );
            let reply = backend.complete(&[ChatMessage::user(retry).with_image(image)])?;
            Ok(parse_turn(&reply))
        }
    }
}

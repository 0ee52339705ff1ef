//! Mobile GUI-automation agent framework.
//!
//! The agent works in two phases. During exploration it acts on an app,
//! reflects on what changed, and records what each UI element does in a
//! structured knowledge base. During deployment it executes user tasks with
//! retrieval-augmented prompts, carrying a running summary as memory.
//!
//! Everything runs against the [`device::Simulator`] and the scripted LLM
//! backend for deterministic tests, and against ADB devices and
//! chat-completion endpoints for real use.

pub mod clock;
pub mod hash;
pub mod ui;
pub mod action;
pub mod device;
pub mod kb;
pub mod llm;
pub mod explore;
pub mod deploy;
pub mod eval;

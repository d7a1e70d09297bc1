//! Chat-completion gateway.
//!
//! Every LLM call in the engine goes through [`ChatBackend`]. The crate ships
//! the deterministic [`MockBackend`]; the HTTP client for a local model server
//! lives in the `visa` crate.

mod json;
mod mock;

use alloc::string::String;

use serde::{Deserialize, Serialize};

pub use json::{
    extract_json_object, parse_labeled_json, parse_probability_json, FieldKind, FieldSpec, ParseError, ParseNote,
    ProbabilityParse,
};
pub use mock::{labelled, Matcher, MockBackend, MockEntry, MockScript, ScriptError};

/// Inference settings pinned for reproducibility.
pub const DEFAULT_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_SEED: i64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub seed: i64,
    /// `None` means unlimited generation.
    pub max_tokens: Option<u32>,
    /// Stable routing key (`"<stage>:<subject>"`) used by scripted backends and traces.
    pub label: Option<String>,
}

impl ChatRequest {
    pub fn new(system_prompt: impl Into<String>, user_prompt: impl Into<String>) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            temperature: DEFAULT_TEMPERATURE,
            seed: DEFAULT_SEED,
            max_tokens: None,
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    /// Model output, verbatim.
    pub text: String,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no scripted response for request {0:?}")]
    MockMiss(String),
    #[error("{count} scripted responses match request {label:?} in strict mode")]
    MockAmbiguous { label: String, count: usize },
}

/// A chat-completion provider.
///
/// Implementations must not touch session state; the caller owns all effects.
pub trait ChatBackend {
    fn chat(&mut self, req: &ChatRequest) -> Result<ChatResponse, LlmError>;

    fn name(&self) -> &str;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &mut B {
    fn chat(&mut self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).chat(req)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for alloc::boxed::Box<B> {
    fn chat(&mut self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).chat(req)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_defaults_match_inference_config() {
        let r = ChatRequest::new("sys", "user");
        assert_eq!(r.temperature, 0.0);
        assert_eq!(r.seed, 42);
        assert_eq!(r.max_tokens, None);
    }
}

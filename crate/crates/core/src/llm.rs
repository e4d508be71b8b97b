//! Completion backend interface.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop: Vec<String>,
}

impl Default for CompletionParams {
    fn default() -> Self {
        CompletionParams {
            model: "text-davinci-003".to_string(),
            temperature: 0.0,
            max_tokens: 256,
            stop: vec![";".to_string(), "-- Question".to_string()],
        }
    }
}

impl CompletionParams {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature >= 0.0) {
            return Err(LlmError::InvalidParams(alloc::format!("temperature {} < 0", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendTag {
    Mock,
    Replay,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub latency: Duration,
    pub backend: BackendTag,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("no API credential configured (set LLM_API_KEY)")]
    CredentialMissing,
    #[error("mock script exhausted")]
    ScriptExhausted,
    #[error("no cassette entry for key {0}")]
    CassetteMiss(String),
    #[error("http error {status:?}: {message}")]
    Http { status: Option<u16>, message: String },
    #[error("invalid completion parameters: {0}")]
    InvalidParams(String),
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("cassette io: {0}")]
    Io(String),
}

pub trait Completer: Send + Sync {
    fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<CompletionResult, LlmError>;
}

impl<C: Completer + ?Sized> Completer for &C {
    fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<CompletionResult, LlmError> {
        (**self).complete(prompt, params)
    }
}

impl<C: Completer + ?Sized> Completer for alloc::boxed::Box<C> {
    fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<CompletionResult, LlmError> {
        (**self).complete(prompt, params)
    }
}

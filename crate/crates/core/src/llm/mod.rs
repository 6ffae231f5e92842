//! Uniform access to task-managed language models.
//!
//! A request pairs a [`PromptSpec`] (instruction template, prompting strategy
//! and few-shot examples) with the named inputs that fill the template. The
//! gateway returns the backend's raw text verbatim: parsing and validation
//! belong to the calling agent, which also owns the retry policy.

mod http;
mod prompts;
mod scripted;

use std::cell::Cell;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpBackend;
pub use prompts::{PromptLibrary, PromptLoadError};
pub use scripted::{RecordedCall, ScriptError, ScriptRule, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStrategy {
    ZeroShot,
    /// Zero-shot with an explicit step-by-step reasoning instruction.
    ZeroShotChainOfThought,
    FewShot,
    ChainOfThoughtFewShot,
}

impl PromptStrategy {
    pub fn is_few_shot(self) -> bool {
        matches!(self, PromptStrategy::FewShot | PromptStrategy::ChainOfThoughtFewShot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputContract {
    Label,
    FreeText,
    JsonObject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("prompt {0:?}: few-shot strategies need at least one example")]
    MissingExamples(String),
    #[error("prompt {0:?}: zero-shot strategies take no examples")]
    UnexpectedExamples(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptSpec {
    /// Task name, e.g. `classify`; also what scripted rules match on.
    pub name: String,
    pub instruction: String,
    pub strategy: PromptStrategy,
    pub examples: Vec<FewShotExample>,
    pub output_contract: OutputContract,
}

impl PromptSpec {
    pub fn new(
        name: &str,
        instruction: &str,
        strategy: PromptStrategy,
        examples: Vec<FewShotExample>,
        output_contract: OutputContract,
    ) -> Result<Self, PromptError> {
        if strategy.is_few_shot() && examples.is_empty() {
            return Err(PromptError::MissingExamples(name.to_string()));
        }
        if !strategy.is_few_shot() && !examples.is_empty() {
            return Err(PromptError::UnexpectedExamples(name.to_string()));
        }
        Ok(PromptSpec {
            name: name.to_string(),
            instruction: instruction.to_string(),
            strategy,
            examples,
            output_contract,
        })
    }

    /// Fills `{placeholder}` occurrences from `inputs` in a single pass.
    /// Unknown placeholders are left as written.
    pub fn render(&self, inputs: &[(String, String)]) -> String {
        let template = self.instruction.as_str();
        let mut out = String::with_capacity(template.len());
        let mut rest = template;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let replaced = after.find('}').and_then(|close| {
                let key = &after[..close];
                let is_ident = !key.is_empty() && key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
                let value = inputs.iter().find(|(k, _)| k == key).map(|(_, v)| v);
                match value {
                    Some(v) if is_ident => Some((v, close)),
                    _ => None,
                }
            });
            match replaced {
                Some((value, close)) => {
                    out.push_str(value);
                    rest = &after[close + 1..];
                }
                None => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }
}

#[derive(Debug, Clone)]
pub struct LlmRequest {
    pub prompt: Arc<PromptSpec>,
    pub inputs: Vec<(String, String)>,
}

impl LlmRequest {
    pub fn new(prompt: Arc<PromptSpec>) -> Self {
        LlmRequest {
            prompt,
            inputs: Vec::new(),
        }
    }

    pub fn with(mut self, name: &str, value: impl Into<String>) -> Self {
        self.inputs.push((name.to_string(), value.into()));
        self
    }

    pub fn task(&self) -> &str {
        &self.prompt.name
    }

    pub fn input(&self, name: &str) -> Option<&str> {
        self.inputs.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    /// The fully rendered user message.
    pub fn payload(&self) -> String {
        self.prompt.render(&self.inputs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LlmResponse {
    pub raw_text: String,
    pub backend_id: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("[{backend_id}] transport failure: {message}")]
    Transport { backend_id: String, message: String },
    #[error("[{backend_id}] request refused: {message}")]
    Refused { backend_id: String, message: String },
}

impl LlmError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, LlmError::Transport { .. })
    }

    pub fn backend_id(&self) -> &str {
        match self {
            LlmError::Transport { backend_id, .. } | LlmError::Refused { backend_id, .. } => backend_id,
        }
    }
}

pub trait LlmBackend: Send + Sync {
    fn id(&self) -> &str;

    /// Returns the backend output verbatim. Implementations never retry.
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError>;
}

/// Per-turn handle over a backend that counts invocations.
pub struct Gateway<'a> {
    backend: &'a dyn LlmBackend,
    calls: Cell<usize>,
}

impl<'a> Gateway<'a> {
    pub fn new(backend: &'a dyn LlmBackend) -> Self {
        Gateway {
            backend,
            calls: Cell::new(0),
        }
    }

    pub fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        self.calls.set(self.calls.get() + 1);
        tracing::debug!(task = request.task(), backend = self.backend.id(), "llm call");
        self.backend.complete(request)
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

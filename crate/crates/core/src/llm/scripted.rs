//! Deterministic stand-in backend replaying canned outputs from rules.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Mutex;

use serde::Deserialize;
use thiserror::Error;

use super::{LlmBackend, LlmError, LlmRequest, LlmResponse};

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("script has no rules")]
    Empty,
    #[error("cannot read script {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid script: {0}")]
    Json(#[from] serde_json::Error),
    #[error("rule {0}: exactly one of `output`, `template`, `echo` or `refuse` is required")]
    BadReply(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Reply {
    Text(String),
    /// Return the named input unchanged.
    Echo(String),
    /// Text with `{input}` placeholders filled from the request inputs.
    Template(String),
    Refuse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    #[default]
    Transport,
    /// Return the rule's `garbage` text instead of the real output.
    Garbage,
}

/// One matcher plus its canned reply.
///
/// A rule matches when its `task` (if any) equals the prompt name, every
/// `when` entry is a substring of the named input (`*` means any input) and
/// every `equals` entry matches an input exactly.
#[derive(Debug, Clone)]
pub struct ScriptRule {
    task: Option<String>,
    when: BTreeMap<String, String>,
    equals: BTreeMap<String, String>,
    reply: Reply,
    fail_first: u32,
    failure: FailureKind,
    garbage: String,
}

impl ScriptRule {
    pub fn reply(task: &str, output: impl Into<String>) -> Self {
        ScriptRule {
            task: Some(task.to_string()),
            when: BTreeMap::new(),
            equals: BTreeMap::new(),
            reply: Reply::Text(output.into()),
            fail_first: 0,
            failure: FailureKind::Transport,
            garbage: String::new(),
        }
    }

    pub fn echo(task: &str, input: &str) -> Self {
        ScriptRule {
            reply: Reply::Echo(input.to_string()),
            ..Self::reply(task, "")
        }
    }

    pub fn template(task: &str, template: &str) -> Self {
        ScriptRule {
            reply: Reply::Template(template.to_string()),
            ..Self::reply(task, "")
        }
    }

    pub fn refuse(task: &str, message: &str) -> Self {
        ScriptRule {
            reply: Reply::Refuse(message.to_string()),
            ..Self::reply(task, "")
        }
    }

    pub fn when(mut self, input: &str, needle: &str) -> Self {
        self.when.insert(input.to_string(), needle.to_string());
        self
    }

    pub fn equals(mut self, input: &str, value: &str) -> Self {
        self.equals.insert(input.to_string(), value.to_string());
        self
    }

    /// The first `k` matching calls fail with a transport error.
    pub fn failing_first(mut self, k: u32) -> Self {
        self.fail_first = k;
        self.failure = FailureKind::Transport;
        self
    }

    /// The first `k` matching calls return `garbage` instead of the output.
    pub fn garbage_first(mut self, k: u32, garbage: &str) -> Self {
        self.fail_first = k;
        self.failure = FailureKind::Garbage;
        self.garbage = garbage.to_string();
        self
    }

    fn matches(&self, request: &LlmRequest) -> bool {
        if let Some(task) = &self.task {
            if task != request.task() {
                return false;
            }
        }
        let when_ok = self.when.iter().all(|(name, needle)| {
            if name == "*" {
                request.inputs.iter().any(|(_, v)| v.contains(needle.as_str()))
            } else {
                request.input(name).is_some_and(|v| v.contains(needle.as_str()))
            }
        });
        when_ok
            && self
                .equals
                .iter()
                .all(|(name, value)| request.input(name).is_some_and(|v| v.trim() == value.trim()))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    #[serde(default)]
    task: Option<String>,
    #[serde(default)]
    when: BTreeMap<String, String>,
    #[serde(default)]
    equals: BTreeMap<String, String>,
    #[serde(default)]
    output: Option<serde_json::Value>,
    #[serde(default)]
    template: Option<String>,
    #[serde(default)]
    echo: Option<String>,
    #[serde(default)]
    refuse: Option<String>,
    #[serde(default)]
    fail_first: u32,
    #[serde(default)]
    failure: FailureKind,
    #[serde(default)]
    garbage: String,
    #[allow(dead_code)]
    #[serde(default)]
    note: Option<String>,
}

impl RuleFile {
    fn into_rule(self, index: usize) -> Result<ScriptRule, ScriptError> {
        let reply = match (self.output, self.template, self.echo, self.refuse) {
            // Non-string outputs are canned as compact JSON text.
            (Some(serde_json::Value::String(s)), None, None, None) => Reply::Text(s),
            (Some(v), None, None, None) => Reply::Text(v.to_string()),
            (None, Some(t), None, None) => Reply::Template(t),
            (None, None, Some(input), None) => Reply::Echo(input),
            (None, None, None, Some(msg)) => Reply::Refuse(msg),
            _ => return Err(ScriptError::BadReply(index)),
        };
        Ok(ScriptRule {
            task: self.task,
            when: self.when,
            equals: self.equals,
            reply,
            fail_first: self.fail_first,
            failure: self.failure,
            garbage: self.garbage,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedCall {
    pub task: String,
    pub inputs: Vec<(String, String)>,
}

pub struct ScriptedBackend {
    id: String,
    rules: Vec<(ScriptRule, AtomicU32)>,
    log: Mutex<Vec<RecordedCall>>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>) -> Result<Self, ScriptError> {
        if rules.is_empty() {
            return Err(ScriptError::Empty);
        }
        Ok(ScriptedBackend {
            id: "scripted".to_string(),
            rules: rules.into_iter().map(|r| (r, AtomicU32::new(0))).collect(),
            log: Mutex::new(Vec::new()),
        })
    }

    /// Parses a JSON array of rules.
    pub fn from_json_str(text: &str) -> Result<Self, ScriptError> {
        let files: Vec<RuleFile> = serde_json::from_str(text)?;
        let rules = files
            .into_iter()
            .enumerate()
            .map(|(i, f)| f.into_rule(i))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(rules)
    }

    pub fn from_file(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScriptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// Puts extra rules ahead of the existing ones.
    pub fn prepend(mut self, rules: Vec<ScriptRule>) -> Self {
        let mut merged: Vec<(ScriptRule, AtomicU32)> = rules.into_iter().map(|r| (r, AtomicU32::new(0))).collect();
        merged.append(&mut self.rules);
        self.rules = merged;
        self
    }

    pub fn calls(&self) -> Vec<RecordedCall> {
        self.log.lock().expect("scripted log poisoned").clone()
    }

    pub fn calls_for(&self, task: &str) -> usize {
        self.log
            .lock()
            .expect("scripted log poisoned")
            .iter()
            .filter(|c| c.task == task)
            .count()
    }

    /// Clears the call log and every fail counter.
    pub fn reset(&self) {
        self.log.lock().expect("scripted log poisoned").clear();
        for (_, counter) in &self.rules {
            counter.store(0, Ordering::SeqCst);
        }
    }
}

impl LlmBackend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        self.log.lock().expect("scripted log poisoned").push(RecordedCall {
            task: request.task().to_string(),
            inputs: request.inputs.clone(),
        });
        let Some((rule, counter)) = self.rules.iter().find(|(rule, _)| rule.matches(request)) else {
            return Err(LlmError::Refused {
                backend_id: self.id.clone(),
                message: format!("no scripted rule matches task {:?}", request.task()),
            });
        };
        let seen = counter.fetch_add(1, Ordering::SeqCst);
        if seen < rule.fail_first {
            return match rule.failure {
                FailureKind::Transport => Err(LlmError::Transport {
                    backend_id: self.id.clone(),
                    message: format!("scripted failure {} of {}", seen + 1, rule.fail_first),
                }),
                FailureKind::Garbage => Ok(LlmResponse {
                    raw_text: rule.garbage.clone(),
                    backend_id: self.id.clone(),
                }),
            };
        }
        let raw_text = match &rule.reply {
            Reply::Text(t) => t.clone(),
            Reply::Echo(name) => request.input(name).unwrap_or_default().to_string(),
            Reply::Template(t) => fill(t, &request.inputs),
            Reply::Refuse(message) => {
                return Err(LlmError::Refused {
                    backend_id: self.id.clone(),
                    message: message.clone(),
                })
            }
        };
        Ok(LlmResponse {
            raw_text,
            backend_id: self.id.clone(),
        })
    }
}

fn fill(template: &str, inputs: &[(String, String)]) -> String {
    let spec = super::PromptSpec {
        name: String::new(),
        instruction: template.to_string(),
        strategy: super::PromptStrategy::ZeroShot,
        examples: Vec::new(),
        output_contract: super::OutputContract::FreeText,
    };
    spec.render(inputs)
}

//! Contextual understanding: classify the question, rewrite it into a
//! standalone question when it depends on earlier turns, then extract and
//! validate the relational facts that make up its QIR.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::config::{EngineConfig, SystemMode};
use crate::jsonout::extract_json_object;
use crate::llm::{Gateway, LlmError, LlmRequest, PromptLibrary, PromptSpec};
use crate::model::{is_valid_variable, Qir, QirTerm, QuestionContext, QuestionForm, Triple};
use crate::retry::{self, Attempt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    SelfContained,
    Dependent,
}

/// Accepts exactly `Self-contained` or `Dependent` after trimming and case
/// folding.
pub fn parse_question_type(raw: &str) -> Option<QuestionType> {
    match raw.trim().to_lowercase().as_str() {
        "self-contained" => Some(QuestionType::SelfContained),
        "dependent" => Some(QuestionType::Dependent),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripleFailure {
    MalformedJson,
    EmptyComponent,
    NoKnownEntity,
    NoVariable,
}

/// Relation phrases made only of these words carry no meaning.
const GENERIC_RELATION_WORDS: &[&str] = &[
    "a", "an", "are", "be", "been", "being", "did", "do", "does", "had", "has", "have", "is", "of", "the", "was", "were",
];

fn is_generic_relation(relation: &str) -> bool {
    relation
        .split_whitespace()
        .all(|w| GENERIC_RELATION_WORDS.contains(&w.to_lowercase().as_str()))
}

fn triple_parts(value: &Value) -> Option<[&str; 3]> {
    match value {
        Value::Array(items) if items.len() == 3 => {
            Some([items[0].as_str()?, items[1].as_str()?, items[2].as_str()?])
        }
        Value::Object(map) => {
            let relation = map.get("relation").or_else(|| map.get("predicate"))?;
            Some([map.get("subject")?.as_str()?, relation.as_str()?, map.get("object")?.as_str()?])
        }
        _ => None,
    }
}

/// Triples Validator. Total over all inputs: returns the QIR or exactly one
/// failure tag.
pub fn validate_triples(raw: &str) -> Result<Qir, TripleFailure> {
    let map = extract_json_object(raw).ok_or(TripleFailure::MalformedJson)?;
    let items = map
        .get("triples")
        .and_then(Value::as_array)
        .ok_or(TripleFailure::MalformedJson)?;
    let form = match map.get("form") {
        None | Some(Value::Null) => QuestionForm::List,
        Some(Value::String(s)) => match s.trim().to_lowercase().as_str() {
            "" | "list" => QuestionForm::List,
            "count" => QuestionForm::Count,
            "boolean" => QuestionForm::Boolean,
            _ => return Err(TripleFailure::MalformedJson),
        },
        Some(_) => return Err(TripleFailure::MalformedJson),
    };
    let mut facts = Vec::with_capacity(items.len());
    for item in items {
        let [s, r, o] = triple_parts(item).ok_or(TripleFailure::MalformedJson)?;
        let (s, r, o) = (s.trim(), r.trim(), o.trim());
        if s.is_empty() || r.is_empty() || o.is_empty() || is_generic_relation(r) {
            return Err(TripleFailure::EmptyComponent);
        }
        for term in [s, o] {
            if term.starts_with('?') && !is_valid_variable(term) {
                return Err(TripleFailure::MalformedJson);
            }
        }
        facts.push(Triple::new(s, r, o));
    }
    let mentions_entity = facts
        .iter()
        .any(|f| matches!(f.subject, QirTerm::Entity(_)) || matches!(f.object, QirTerm::Entity(_)));
    if !mentions_entity {
        return Err(TripleFailure::NoKnownEntity);
    }
    let has_variable = facts.iter().any(|f| f.subject.is_variable() || f.object.is_variable());
    if form != QuestionForm::Boolean && !has_variable {
        return Err(TripleFailure::NoVariable);
    }
    let target = map
        .get("target")
        .and_then(Value::as_str)
        .map(|t| {
            let t = t.trim();
            if t.starts_with('?') {
                t.to_string()
            } else {
                format!("?{t}")
            }
        })
        .filter(|t| facts.iter().any(|f| f.subject.as_str() == t || f.object.as_str() == t));
    Qir::from_facts(facts, form, target).map_err(|_| TripleFailure::MalformedJson)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UnderstandError {
    #[error("classification failed after {attempts} attempt(s): {reason}")]
    Classification { attempts: u32, reason: String },
    #[error("triple extraction failed after {attempts} attempt(s): {reason}")]
    Extraction { attempts: u32, reason: String },
}

fn llm_attempt<T>(
    gateway: &Gateway<'_>,
    request: &LlmRequest,
    validate: impl Fn(&str) -> Result<T, String>,
) -> Attempt<T, String> {
    match gateway.complete(request) {
        Err(e @ LlmError::Refused { .. }) => Attempt::Abort(e.to_string()),
        Err(e) => Attempt::Retry(e.to_string()),
        Ok(response) => match validate(&response.raw_text) {
            Ok(v) => Attempt::Done(v),
            Err(reason) => Attempt::Retry(reason),
        },
    }
}

pub fn classify(
    gateway: &Gateway<'_>,
    prompt: &Arc<PromptSpec>,
    question: &str,
    theta: u32,
) -> Result<QuestionType, UnderstandError> {
    let request = LlmRequest::new(prompt.clone()).with("question", question);
    retry::bounded(theta, |_| {
        llm_attempt(gateway, &request, |raw| {
            parse_question_type(raw).ok_or_else(|| format!("unexpected label {:?}", raw.trim()))
        })
    })
    .map_err(|e| UnderstandError::Classification {
        attempts: e.attempts,
        reason: e.last,
    })
}

/// First non-empty line with surrounding quotes removed.
pub(crate) fn clean_rewrite(raw: &str) -> Option<String> {
    let line = raw.lines().map(str::trim).find(|l| !l.is_empty())?;
    let line = line.trim_matches(|c| c == '"' || c == '\'' || c == '`').trim();
    (!line.is_empty()).then(|| line.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rephrased {
    pub question: String,
    /// True when the retries ran out and the original question is used.
    pub fell_back: bool,
}

pub fn rephrase(
    gateway: &Gateway<'_>,
    prompt: &Arc<PromptSpec>,
    question: &str,
    context: &QuestionContext,
    theta: u32,
) -> Rephrased {
    let request = LlmRequest::new(prompt.clone())
        .with("question", question)
        .with("context", context.render());
    match retry::bounded(theta, |_| {
        llm_attempt(gateway, &request, |raw| clean_rewrite(raw).ok_or_else(|| "empty rewrite".to_string()))
    }) {
        Ok(q) => Rephrased {
            question: q,
            fell_back: false,
        },
        Err(e) => {
            tracing::warn!(reason = %e.last, "rephrasing failed, keeping the original question");
            Rephrased {
                question: question.to_string(),
                fell_back: true,
            }
        }
    }
}

/// Extraction loop: ask for triples and validate, up to `theta` times.
pub fn extract_qir(
    gateway: &Gateway<'_>,
    prompt: &Arc<PromptSpec>,
    standalone_question: &str,
    theta: u32,
) -> Result<Qir, UnderstandError> {
    let request = LlmRequest::new(prompt.clone()).with("question", standalone_question);
    retry::bounded(theta, |_| {
        llm_attempt(gateway, &request, |raw| validate_triples(raw).map_err(|tag| format!("{tag:?}")))
    })
    .map_err(|e| UnderstandError::Extraction {
        attempts: e.attempts,
        reason: e.last,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Understanding {
    /// `None` in single-turn mode, where classification is skipped.
    pub question_type: Option<QuestionType>,
    pub standalone_question: String,
    pub rephrase_fell_back: bool,
    pub qir: Qir,
}

/// The whole stage in one call: classify, maybe rephrase, extract.
pub fn understand(
    gateway: &Gateway<'_>,
    prompts: &PromptLibrary,
    question: &str,
    context: &QuestionContext,
    config: &EngineConfig,
) -> Result<Understanding, UnderstandError> {
    let question_type = match config.system_mode {
        SystemMode::SingleTurn => None,
        SystemMode::MultiTurn => Some(classify(gateway, &prompts.classify, question, config.theta)?),
    };
    let rephrased = match question_type {
        Some(QuestionType::Dependent) => rephrase(gateway, &prompts.rephrase, question, context, config.theta),
        _ => Rephrased {
            question: question.to_string(),
            fell_back: false,
        },
    };
    let qir = extract_qir(gateway, &prompts.extract_triples, &rephrased.question, config.theta)?;
    Ok(Understanding {
        question_type,
        standalone_question: rephrased.question,
        rephrase_fell_back: rephrased.fell_back,
        qir,
    })
}

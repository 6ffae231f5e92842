//! Answer normalization and the set/ranked metrics.

use std::collections::HashSet;

use crate::model::{Answer, AnswerKind};

/// Comparison key for an answer. IRIs compare exactly, numbers by value,
/// booleans as booleans, other literals trimmed and case-folded.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AnswerKey {
    Iri(String),
    /// Canonical rendering of the value as an `f64`.
    Number(String),
    Boolean(bool),
    Text(String),
}

fn number_key(text: &str) -> Option<AnswerKey> {
    let v: f64 = text.trim().parse().ok()?;
    // `+ 0.0` folds -0 into 0.
    v.is_finite().then(|| AnswerKey::Number(format!("{}", v + 0.0)))
}

pub fn normalize(answer: &Answer) -> AnswerKey {
    match answer.kind {
        AnswerKind::Entity => AnswerKey::Iri(answer.value.clone()),
        AnswerKind::Boolean => AnswerKey::Boolean(answer.value == "true"),
        AnswerKind::Count | AnswerKind::Literal => {
            if let Some(key) = number_key(&answer.value) {
                return key;
            }
            let text = answer.value.trim().to_lowercase();
            match text.as_str() {
                "true" | "false" if answer.kind == AnswerKind::Literal => AnswerKey::Boolean(text == "true"),
                _ => AnswerKey::Text(text),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedScores {
    pub p_at_1: f64,
    pub mrr: f64,
    pub hit_at_5: f64,
}

fn key_set(answers: &[Answer]) -> HashSet<AnswerKey> {
    answers.iter().map(normalize).collect()
}

/// Precision, recall and F1 over normalized answer sets.
pub fn score_set(predicted: &[Answer], gold: &[Answer]) -> SetScores {
    let pred = key_set(predicted);
    let gold = key_set(gold);
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => {
            return SetScores {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            }
        }
        (true, false) | (false, true) => {
            return SetScores {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
            }
        }
        _ => {}
    }
    let hits = pred.intersection(&gold).count() as f64;
    let precision = hits / pred.len() as f64;
    let recall = hits / gold.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    SetScores { precision, recall, f1 }
}

/// P@1, reciprocal rank of the first correct answer, and Hit@5. Duplicate
/// predictions (after normalization) keep their first position.
pub fn score_ranked(predicted: &[Answer], gold: &[Answer]) -> RankedScores {
    let gold = key_set(gold);
    if gold.is_empty() {
        let v = if predicted.is_empty() { 1.0 } else { 0.0 };
        return RankedScores {
            p_at_1: v,
            mrr: v,
            hit_at_5: v,
        };
    }
    let mut seen = HashSet::new();
    let ranked: Vec<AnswerKey> = predicted.iter().map(normalize).filter(|k| seen.insert(k.clone())).collect();
    let first_hit = ranked.iter().position(|k| gold.contains(k));
    match first_hit {
        None => RankedScores {
            p_at_1: 0.0,
            mrr: 0.0,
            hit_at_5: 0.0,
        },
        Some(i) => RankedScores {
            p_at_1: if i == 0 { 1.0 } else { 0.0 },
            mrr: 1.0 / (i + 1) as f64,
            hit_at_5: if i < 5 { 1.0 } else { 0.0 },
        },
    }
}

/// Dialogue-mode F1 as a percentage of standalone-mode F1; `None` when the
/// standalone score is zero.
pub fn retention(dialogue_f1: f64, standalone_f1: f64) -> Option<f64> {
    (standalone_f1 > 0.0).then(|| dialogue_f1 / standalone_f1 * 100.0)
}

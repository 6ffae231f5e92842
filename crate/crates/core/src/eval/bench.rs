//! Benchmark files and replay.
//!
//! Single-turn files are either a plain array of `{id, question, answers}`
//! or QALD-9 JSON (`{"questions": [...]}` with SPARQL-results answers).
//! Dialogue files are an array (or `{"dialogues": [...]}`) of
//! `{dialogue_id, turns: [{question, standalone, answers}]}`.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::metrics::{score_ranked, score_set};
use super::report::{FailureStage, ItemReport, MetricReport, StageTimings};
use crate::model::{is_absolute_iri, Answer};
use crate::orchestrator::{Engine, Stage, TurnResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standalone_question: Option<String>,
    pub gold_answers: Vec<Answer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dialogue_id: Option<String>,
    /// 1-based position within the dialogue.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_index: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Every item in a fresh session, asked in its standalone form.
    Single,
    /// Items of one dialogue share a session and are asked in turn order.
    Dialogue,
}

#[derive(Debug, Error)]
pub enum BenchLoadError {
    #[error("invalid benchmark JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("benchmark item {index}: {message}")]
    Item { index: usize, message: String },
    #[error("unrecognized benchmark layout")]
    Layout,
}

/// Gold answers may be written as full answer objects, bare strings
/// (absolute IRIs become entities), booleans or numbers.
#[derive(Deserialize)]
#[serde(untagged)]
enum GoldAnswer {
    Full(Answer),
    Text(String),
    Flag(bool),
    Number(serde_json::Number),
}

impl From<GoldAnswer> for Answer {
    fn from(g: GoldAnswer) -> Answer {
        match g {
            GoldAnswer::Full(a) => a,
            GoldAnswer::Text(s) if is_absolute_iri(&s) => Answer::entity(s).expect("checked absolute IRI"),
            GoldAnswer::Text(s) => Answer::literal(s),
            GoldAnswer::Flag(b) => Answer::boolean(b),
            GoldAnswer::Number(n) => Answer::literal(n.to_string()),
        }
    }
}

#[derive(Deserialize)]
struct PlainItem {
    id: Value,
    question: String,
    #[serde(alias = "gold_answers")]
    answers: Vec<GoldAnswer>,
}

#[derive(Deserialize)]
struct DialogueFile {
    dialogue_id: Value,
    turns: Vec<DialogueTurn>,
}

#[derive(Deserialize)]
struct DialogueTurn {
    question: String,
    #[serde(alias = "standalone_question")]
    standalone: Option<String>,
    #[serde(alias = "gold_answers")]
    answers: Vec<GoldAnswer>,
}

fn id_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Reads any supported layout into a flat item list.
pub fn load_bench(text: &str) -> Result<Vec<BenchmarkItem>, BenchLoadError> {
    let value: Value = serde_json::from_str(text)?;
    if let Some(questions) = value.get("questions").and_then(Value::as_array) {
        return questions.iter().enumerate().map(|(i, q)| qald_item(i, q)).collect();
    }
    let entries = match &value {
        Value::Array(a) => a.clone(),
        Value::Object(o) => match o.get("dialogues") {
            Some(Value::Array(a)) => a.clone(),
            _ => return Err(BenchLoadError::Layout),
        },
        _ => return Err(BenchLoadError::Layout),
    };
    let mut items = Vec::new();
    for (index, entry) in entries.into_iter().enumerate() {
        let item_err = |e: serde_json::Error| BenchLoadError::Item {
            index,
            message: e.to_string(),
        };
        if entry.get("turns").is_some() {
            let d: DialogueFile = serde_json::from_value(entry).map_err(item_err)?;
            let dialogue_id = id_text(&d.dialogue_id);
            for (t, turn) in d.turns.into_iter().enumerate() {
                items.push(BenchmarkItem {
                    id: format!("{dialogue_id}#{}", t + 1),
                    question: turn.question,
                    standalone_question: turn.standalone,
                    gold_answers: turn.answers.into_iter().map(Answer::from).collect(),
                    dialogue_id: Some(dialogue_id.clone()),
                    turn_index: Some(t + 1),
                });
            }
        } else {
            let p: PlainItem = serde_json::from_value(entry).map_err(item_err)?;
            items.push(BenchmarkItem {
                id: id_text(&p.id),
                question: p.question,
                standalone_question: None,
                gold_answers: p.answers.into_iter().map(Answer::from).collect(),
                dialogue_id: None,
                turn_index: None,
            });
        }
    }
    Ok(items)
}

fn qald_item(index: usize, q: &Value) -> Result<BenchmarkItem, BenchLoadError> {
    let fail = |message: &str| BenchLoadError::Item {
        index,
        message: message.to_string(),
    };
    let id = q.get("id").map(id_text).ok_or_else(|| fail("missing id"))?;
    let question = q
        .get("question")
        .and_then(Value::as_array)
        .and_then(|langs| {
            langs
                .iter()
                .find(|l| l.get("language").and_then(Value::as_str) == Some("en"))
                .and_then(|l| l.get("string"))
                .and_then(Value::as_str)
        })
        .ok_or_else(|| fail("no English question string"))?
        .to_string();
    let mut gold = Vec::new();
    for answer in q.get("answers").and_then(Value::as_array).into_iter().flatten() {
        if let Some(b) = answer.get("boolean").and_then(Value::as_bool) {
            gold.push(Answer::boolean(b));
            continue;
        }
        let bindings = answer.pointer("/results/bindings").and_then(Value::as_array);
        for binding in bindings.into_iter().flatten().filter_map(Value::as_object) {
            for term in binding.values() {
                let value = term.get("value").and_then(Value::as_str).unwrap_or_default();
                let answer = match term.get("type").and_then(Value::as_str) {
                    Some("uri") => Answer::entity(value).map_err(|e| fail(&e.to_string()))?,
                    _ => Answer::literal(value),
                };
                gold.push(answer);
            }
        }
    }
    Ok(BenchmarkItem {
        id,
        question,
        standalone_question: None,
        gold_answers: gold,
        dialogue_id: None,
        turn_index: None,
    })
}

fn failure_stage(result: &TurnResult) -> FailureStage {
    match result.error.as_ref().map(|e| e.stage) {
        Some(Stage::Understanding) => FailureStage::Qu,
        Some(Stage::Linking) => FailureStage::Linking,
        Some(Stage::Planning | Stage::Routing) => FailureStage::Execution,
        None if result.answers.is_empty() => FailureStage::Execution,
        None => FailureStage::Selection,
    }
}

fn score_item(item: &BenchmarkItem, asked: &str, result: Result<TurnResult, String>) -> ItemReport {
    let (predicted, error, degraded, executed, candidates, calls, timings, stage) = match &result {
        Ok(r) => (
            r.answers.clone(),
            r.error.as_ref().map(|e| e.message.clone()),
            r.degraded.clone(),
            r.stats.executed_queries,
            r.stats.candidate_queries,
            r.stats.llm_calls,
            StageTimings {
                understanding_ms: r.stats.understanding_ms,
                linking_ms: r.stats.linking_ms,
                planning_ms: r.stats.planning_ms,
                total_ms: r.stats.total_ms,
            },
            failure_stage(r),
        ),
        Err(e) => (Vec::new(), Some(e.clone()), Vec::new(), 0, 0, 0, StageTimings::default(), FailureStage::Qu),
    };
    let set = score_set(&predicted, &item.gold_answers);
    let ranked = score_ranked(&predicted, &item.gold_answers);
    ItemReport {
        id: item.id.clone(),
        dialogue_id: item.dialogue_id.clone(),
        turn_index: item.turn_index,
        asked: asked.to_string(),
        predicted,
        gold: item.gold_answers.clone(),
        precision: set.precision,
        recall: set.recall,
        f1: set.f1,
        p_at_1: ranked.p_at_1,
        mrr: ranked.mrr,
        hit_at_5: ranked.hit_at_5,
        failure: (set.recall == 0.0).then_some(stage),
        error,
        degraded,
        executed_queries: executed,
        candidate_queries: candidates,
        llm_calls: calls,
        timings,
    }
}

/// Replays `items` through `engine` and scores every answer. Item-level
/// failures are scored as misses; the run always completes.
pub fn run_benchmark(engine: &Engine, items: &[BenchmarkItem], mode: EvalMode) -> MetricReport {
    let mut reports = Vec::with_capacity(items.len());
    match mode {
        EvalMode::Single => {
            for item in items {
                let asked = item.standalone_question.as_deref().unwrap_or(&item.question);
                let mut session = engine.new_session();
                let result = engine.process_turn(&mut session, asked).map_err(|e| e.to_string());
                reports.push(score_item(item, asked, result));
            }
        }
        EvalMode::Dialogue => {
            let mut start = 0;
            while start < items.len() {
                let group = &items[start].dialogue_id;
                let mut end = start + 1;
                while group.is_some() && end < items.len() && items[end].dialogue_id == *group {
                    end += 1;
                }
                let mut turns: Vec<&BenchmarkItem> = items[start..end].iter().collect();
                turns.sort_by_key(|i| i.turn_index);
                let mut session = engine.new_session();
                for item in turns {
                    let result = engine.process_turn(&mut session, &item.question).map_err(|e| e.to_string());
                    reports.push(score_item(item, &item.question, result));
                }
                start = end;
            }
        }
    }
    MetricReport::new(mode, reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_plain_dialogue_and_qald_layouts() {
        let plain = load_bench(r#"[{"id":1,"question":"Q?","answers":["http://x/a","Yate",true,2001]}]"#).unwrap();
        assert_eq!(plain[0].id, "1");
        assert_eq!(plain[0].gold_answers.len(), 4);
        assert_eq!(plain[0].gold_answers[0], Answer::entity("http://x/a").unwrap());

        let dialogues = load_bench(
            r#"{"dialogues":[{"dialogue_id":"hp","turns":[{"question":"A?","standalone":"A?","answers":[]},{"question":"B?","standalone":"Bx?","answers":["1"]}]}]}"#,
        )
        .unwrap();
        assert_eq!(dialogues.len(), 2);
        assert_eq!(dialogues[1].id, "hp#2");
        assert_eq!(dialogues[1].standalone_question.as_deref(), Some("Bx?"));

        let qald = load_bench(
            r#"{"questions":[{"id":"7","question":[{"language":"de","string":"Wer?"},{"language":"en","string":"Who?"}],
               "answers":[{"head":{"vars":["uri"]},"results":{"bindings":[{"uri":{"type":"uri","value":"http://dbpedia.org/resource/X"}}]}}]},
               {"id":"8","question":[{"language":"en","string":"Is it?"}],"answers":[{"head":{},"boolean":false}]}]}"#,
        )
        .unwrap();
        assert_eq!(qald[0].question, "Who?");
        assert_eq!(qald[1].gold_answers, vec![Answer::boolean(false)]);
        assert!(matches!(load_bench("3"), Err(BenchLoadError::Layout)));
    }
}

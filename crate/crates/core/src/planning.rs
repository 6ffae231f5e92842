//! Query planning: expand the linked QIR into every predicate configuration,
//! keep the `query_num` cheapest, let the LLM prune the predicate set, and
//! execute only the candidates that use a kept predicate.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::config::EngineConfig;
use crate::jsonout::extract_json_object;
use crate::kg::{predicate_label, KgTarget, PatternTerm, ResultSet, SparqlQuery, Term, TriplePattern};
use crate::llm::{Gateway, LlmError, LlmRequest, PromptLibrary, PromptSpec};
use crate::matching::{Direction, LinkingMaps};
use crate::model::{is_absolute_iri, Answer, Qir, QirTerm, QuestionForm};
use crate::retry::{self, Attempt};

/// Predicate chosen for one fact of a candidate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Choice {
    pub fact: usize,
    pub iri: String,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateQuery {
    pub query: SparqlQuery,
    pub predicate_set: BTreeSet<String>,
    /// Sum of the chosen options' positions in their ranked lists.
    pub rank_cost: usize,
    /// One choice per generated fact, in fact order.
    pub origin: Vec<Choice>,
}

impl CandidateQuery {
    fn order_key(&self) -> (usize, Vec<(&str, Direction)>) {
        (
            self.rank_cost,
            self.origin.iter().map(|c| (c.iri.as_str(), c.direction)).collect(),
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("no executable facts: every relation is unlinked")]
    NoExecutableFacts,
    #[error("answer variable {0} does not occur in any executable fact")]
    AnswerVariableUnbound(String),
    #[error("entity {0:?} has no linked vertex")]
    UnlinkedEntity(String),
    #[error("all {0} selected queries failed; last error: {1}")]
    AllQueriesFailed(usize, String),
}

fn pattern_term(term: &QirTerm, maps: &LinkingMaps) -> Result<PatternTerm, PlanError> {
    match term {
        QirTerm::Variable(v) => Ok(PatternTerm::var(v)),
        QirTerm::Entity(e) => maps
            .ent_to_vertex
            .get(e)
            .map(|iri| PatternTerm::iri(iri))
            .ok_or_else(|| PlanError::UnlinkedEntity(e.clone())),
    }
}

/// Cartesian product over the per-fact predicate lists.
///
/// Facts listed in `maps.unlinked_facts` are skipped. A linked fact without
/// any predicate cannot be satisfied, so no candidate is produced at all.
pub fn generate(qir: &Qir, maps: &LinkingMaps) -> Result<Vec<CandidateQuery>, PlanError> {
    let mut facts = Vec::new();
    for (i, fact) in qir.facts.iter().enumerate() {
        if maps.unlinked_facts.contains(&i) {
            continue;
        }
        let options = maps.fact_predicates.get(i).map(Vec::as_slice).unwrap_or_default();
        if options.is_empty() {
            return Ok(Vec::new());
        }
        facts.push((i, fact, options));
    }
    if facts.is_empty() {
        return Err(PlanError::NoExecutableFacts);
    }
    let mut endpoints = Vec::with_capacity(facts.len());
    for (_, fact, _) in &facts {
        endpoints.push((pattern_term(&fact.subject, maps)?, pattern_term(&fact.object, maps)?));
    }
    let answer_var = qir.answer_variable().map(|v| v.trim_start_matches('?').to_string());
    let covered = |v: &str| endpoints.iter().any(|(s, o)| s.as_var() == Some(v) || o.as_var() == Some(v));
    if qir.form != QuestionForm::Boolean {
        let v = answer_var.clone().unwrap_or_default();
        if !covered(&v) {
            return Err(PlanError::AnswerVariableUnbound(format!("?{v}")));
        }
    }

    let total: usize = facts.iter().map(|(_, _, o)| o.len()).product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; facts.len()];
    loop {
        let mut patterns = Vec::with_capacity(facts.len());
        let mut origin = Vec::with_capacity(facts.len());
        for (k, (fact_index, _, options)) in facts.iter().enumerate() {
            let opt = &options[idx[k]];
            let (s, o) = endpoints[k].clone();
            let p = PatternTerm::iri(&opt.iri);
            patterns.push(match opt.direction {
                Direction::Forward => TriplePattern::new(s, p, o),
                Direction::Reversed => TriplePattern::new(o, p, s),
            });
            origin.push(Choice {
                fact: *fact_index,
                iri: opt.iri.clone(),
                direction: opt.direction,
            });
        }
        let query = match qir.form {
            QuestionForm::Boolean => SparqlQuery::ask(patterns),
            QuestionForm::Count => SparqlQuery::count(answer_var.as_deref().unwrap_or_default(), patterns),
            QuestionForm::List => SparqlQuery::select(&[answer_var.as_deref().unwrap_or_default()], patterns),
        };
        out.push(CandidateQuery {
            predicate_set: origin.iter().map(|c| c.iri.clone()).collect(),
            rank_cost: idx.iter().sum(),
            query,
            origin,
        });
        // Odometer increment, last fact fastest.
        let mut k = facts.len();
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < facts[k].2.len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Keeps the `query_num` candidates with the smallest rank cost; ties are
/// broken by the chosen predicates in fact order.
pub fn truncate(mut candidates: Vec<CandidateQuery>, query_num: usize) -> Vec<CandidateQuery> {
    candidates.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    candidates.truncate(query_num);
    candidates
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateIndex {
    /// Distinct predicates in first-seen order.
    pub all_predicates: Vec<String>,
    pub pred_to_query: BTreeMap<String, BTreeSet<usize>>,
}

pub fn build_index(candidates: &[CandidateQuery]) -> PredicateIndex {
    let mut index = PredicateIndex::default();
    for (i, c) in candidates.iter().enumerate() {
        for choice in &c.origin {
            let entry = index.pred_to_query.entry(choice.iri.clone()).or_default();
            if entry.is_empty() {
                index.all_predicates.push(choice.iri.clone());
            }
            entry.insert(i);
        }
    }
    index
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionFailure {
    MalformedJson,
    EmptySelection,
}

/// Query Validator for the predicate filter: a JSON object with a
/// `predicates` list; entries outside `all` are dropped and the remainder
/// must be non-empty. The result follows `all`'s order.
pub fn validate_predicate_selection(raw: &str, all: &[String]) -> Result<Vec<String>, SelectionFailure> {
    let map = extract_json_object(raw).ok_or(SelectionFailure::MalformedJson)?;
    let items = map
        .get("predicates")
        .and_then(Value::as_array)
        .ok_or(SelectionFailure::MalformedJson)?;
    let named: HashSet<&str> = items
        .iter()
        .filter_map(Value::as_str)
        .map(|s| s.trim().trim_start_matches('<').trim_end_matches('>'))
        .collect();
    let kept: Vec<String> = all.iter().filter(|p| named.contains(p.as_str())).cloned().collect();
    if kept.is_empty() {
        return Err(SelectionFailure::EmptySelection);
    }
    Ok(kept)
}

pub fn render_predicates(all: &[String]) -> String {
    all.iter()
        .map(|p| format!("- {p} ({})\n", predicate_label(p)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterOutcome {
    pub kept: Vec<String>,
    /// True when validation never succeeded and every predicate is kept.
    pub fell_back: bool,
}

pub fn filter_predicates(
    gateway: &Gateway<'_>,
    prompt: &Arc<PromptSpec>,
    question: &str,
    index: &PredicateIndex,
    theta: u32,
) -> FilterOutcome {
    let request = LlmRequest::new(prompt.clone())
        .with("question", question)
        .with("predicates", render_predicates(&index.all_predicates));
    let result = retry::bounded(theta, |_| match gateway.complete(&request) {
        Err(e @ LlmError::Refused { .. }) => Attempt::Abort(e.to_string()),
        Err(e) => Attempt::Retry(e.to_string()),
        Ok(r) => match validate_predicate_selection(&r.raw_text, &index.all_predicates) {
            Ok(kept) => Attempt::Done(kept),
            Err(tag) => Attempt::Retry(format!("{tag:?}")),
        },
    });
    match result {
        Ok(kept) => FilterOutcome { kept, fell_back: false },
        Err(e) => {
            tracing::warn!(reason = %e.last, "predicate filter failed, executing all candidates");
            FilterOutcome {
                kept: index.all_predicates.clone(),
                fell_back: true,
            }
        }
    }
}

/// Indices of candidates sharing at least one predicate with `kept`.
pub fn select_queries(candidates: &[CandidateQuery], kept: &[String]) -> Vec<usize> {
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| kept.iter().any(|p| c.predicate_set.contains(p)))
        .map(|(i, _)| i)
        .collect()
}

fn term_answer(term: &Term) -> Option<Answer> {
    match term {
        Term::Iri { value } if is_absolute_iri(value) => Answer::entity(value.clone()).ok(),
        Term::Iri { value } | Term::Literal { value, .. } => Some(Answer::literal(value.clone())),
        Term::Blank { .. } => None,
    }
}

/// Merges per-query results in execution order. SELECT bindings are
/// de-duplicated keeping the first occurrence; counts take the largest
/// non-zero value; ASK results combine by OR.
pub fn aggregate(form: QuestionForm, answer_var: Option<&str>, results: &[&ResultSet]) -> Vec<Answer> {
    match form {
        QuestionForm::Boolean => {
            let any = results.iter().any(|r| matches!(r, ResultSet::Boolean { value: true }));
            vec![Answer::boolean(any)]
        }
        QuestionForm::Count => {
            let max = results
                .iter()
                .filter_map(|r| match r {
                    ResultSet::Count { value } => Some(*value),
                    _ => None,
                })
                .max()
                .unwrap_or(0);
            if max == 0 {
                Vec::new()
            } else {
                vec![Answer::count(max)]
            }
        }
        QuestionForm::List => {
            let var = answer_var.unwrap_or_default().trim_start_matches('?');
            let mut seen = HashSet::new();
            let mut out = Vec::new();
            for r in results {
                if let ResultSet::Rows { rows, .. } = r {
                    for row in rows {
                        if let Some(answer) = row.get(var).and_then(term_answer) {
                            if seen.insert((answer.kind, answer.value.clone())) {
                                out.push(answer);
                            }
                        }
                    }
                }
            }
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTrace {
    pub sparql: String,
    pub predicates: Vec<String>,
    pub rank_cost: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutedQuery {
    pub sparql: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<ResultSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Debug record of one planning run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanTrace {
    pub generated: usize,
    pub candidates: Vec<CandidateTrace>,
    pub all_predicates: Vec<String>,
    pub kept_predicates: Vec<String>,
    pub filter_fell_back: bool,
    pub skipped_facts: Vec<usize>,
    pub executed: Vec<ExecutedQuery>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub answers: Vec<Answer>,
    pub trace: PlanTrace,
    pub failed_queries: usize,
}

/// A planning error together with the trace gathered before it.
#[derive(Debug)]
pub struct PlanFailure {
    pub error: PlanError,
    pub trace: PlanTrace,
}

pub struct Planner<'a> {
    pub gateway: &'a Gateway<'a>,
    pub prompts: &'a PromptLibrary,
    pub target: &'a dyn KgTarget,
    pub config: &'a EngineConfig,
}

impl Planner<'_> {
    pub fn plan_and_execute(&self, question: &str, qir: &Qir, maps: &LinkingMaps) -> Result<PlanOutcome, Box<PlanFailure>> {
        let mut trace = PlanTrace {
            skipped_facts: maps.unlinked_facts.clone(),
            ..Default::default()
        };
        let generated = match generate(qir, maps) {
            Ok(g) => g,
            Err(error) => return Err(Box::new(PlanFailure { error, trace })),
        };
        trace.generated = generated.len();
        let candidates = truncate(generated, self.config.query_num);
        trace.candidates = candidates
            .iter()
            .map(|c| CandidateTrace {
                sparql: c.query.to_string(),
                predicates: c.origin.iter().map(|o| o.iri.clone()).collect(),
                rank_cost: c.rank_cost,
            })
            .collect();
        let index = build_index(&candidates);
        trace.all_predicates = index.all_predicates.clone();
        if candidates.is_empty() {
            return Ok(PlanOutcome {
                answers: Vec::new(),
                trace,
                failed_queries: 0,
            });
        }
        let filter = filter_predicates(self.gateway, &self.prompts.select_predicates, question, &index, self.config.theta);
        trace.kept_predicates = filter.kept.clone();
        trace.filter_fell_back = filter.fell_back;

        let selected = select_queries(&candidates, &filter.kept);
        let mut results = Vec::with_capacity(selected.len());
        let mut failed = 0;
        let mut last_error = String::new();
        for &i in &selected {
            let query = &candidates[i].query;
            let sparql = query.to_string();
            match self.target.execute(query) {
                Ok(rs) => {
                    trace.executed.push(ExecutedQuery {
                        sparql,
                        ok: true,
                        result: Some(rs.clone()),
                        error: None,
                    });
                    results.push(rs);
                }
                Err(e) => {
                    tracing::warn!(error = %e, "candidate query failed");
                    failed += 1;
                    last_error = e.to_string();
                    trace.executed.push(ExecutedQuery {
                        sparql,
                        ok: false,
                        result: None,
                        error: Some(last_error.clone()),
                    });
                }
            }
        }
        if results.is_empty() && failed > 0 {
            return Err(Box::new(PlanFailure {
                error: PlanError::AllQueriesFailed(failed, last_error),
                trace,
            }));
        }
        let refs: Vec<&ResultSet> = results.iter().collect();
        let answers = aggregate(qir.form, qir.answer_variable(), &refs);
        Ok(PlanOutcome {
            answers,
            trace,
            failed_queries: failed,
        })
    }
}

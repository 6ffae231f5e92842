//! Grounding a QIR in the graph: each entity phrase is linked to exactly one
//! retrieved vertex chosen by the LLM, then each relation phrase is linked to
//! the predicates connecting the already-linked endpoints, ranked by
//! embedding similarity.

mod embed;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use embed::{cosine, EmbedError, Embedder, HttpEmbedder, TrigramEmbedder};

use crate::config::EngineConfig;
use crate::jsonout::extract_json_object;
use crate::kg::{self, KgError, KgTarget};
use crate::llm::{Gateway, LlmError, LlmRequest, PromptLibrary, PromptSpec};
use crate::model::{Qir, QirTerm, Triple};
use crate::retry::{self, Attempt};

/// Orientation of a predicate relative to the QIR fact it realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `subject predicate object`, as the fact is written.
    Forward,
    /// `object predicate subject`: the graph states the fact the other way.
    Reversed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateOption {
    pub iri: String,
    pub score: f64,
    pub direction: Direction,
}

/// Linking output.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkingMaps {
    pub ent_to_vertex: BTreeMap<String, String>,
    /// Relation phrase to ranked predicates, merged over facts sharing the phrase.
    pub rel_to_pred: BTreeMap<String, Vec<PredicateOption>>,
    /// Ranked predicates per fact, indexed like `Qir::facts`.
    pub fact_predicates: Vec<Vec<PredicateOption>>,
    /// Facts whose endpoints are both variables and so could not be linked.
    pub unlinked_facts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityLinkTrace {
    pub entity: String,
    pub candidates: usize,
    pub vertex: String,
    pub label: String,
    pub attempts: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexFailure {
    MalformedJson,
    NotInCandidates,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("no graph vertex matches entity {entity:?}")]
    NoCandidates { entity: String },
    #[error("vertex selection failed for entity {entity:?} after {attempts} attempt(s): {reason}")]
    SelectionFailed {
        entity: String,
        attempts: u32,
        reason: String,
    },
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Vertex Validator: the output must be a JSON object whose `label` names
/// one of the candidate labels. Exact matches win over case-insensitive
/// ones; among equal labels the first candidate is taken.
pub fn validate_vertex(raw: &str, candidates: &[(String, String)]) -> Result<String, VertexFailure> {
    let map = extract_json_object(raw).ok_or(VertexFailure::MalformedJson)?;
    let label = match map.get("label") {
        Some(Value::String(s)) => s.trim(),
        _ => return Err(VertexFailure::MalformedJson),
    };
    candidates
        .iter()
        .find(|(_, l)| l.trim() == label)
        .or_else(|| candidates.iter().find(|(_, l)| l.trim().to_lowercase() == label.to_lowercase()))
        .map(|(iri, _)| iri.clone())
        .ok_or(VertexFailure::NotInCandidates)
}

/// Numbered, de-duplicated label list shown to the model (no IRIs).
pub fn render_candidates(candidates: &[(String, String)]) -> String {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = String::new();
    for (_, label) in candidates {
        if seen.insert(label.as_str()) {
            out.push_str(&format!("{}. {}\n", seen.len(), label));
        }
    }
    out
}

/// Asks the model to pick one candidate, retrying up to `theta` times on
/// transport errors or validator failures. The candidate list is re-sent
/// unchanged on every attempt.
pub fn select_vertex(
    gateway: &Gateway<'_>,
    prompt: &std::sync::Arc<PromptSpec>,
    question: &str,
    entity: &str,
    candidates: &[(String, String)],
    theta: u32,
) -> Result<(String, u32), MatchError> {
    if candidates.is_empty() {
        return Err(MatchError::NoCandidates {
            entity: entity.to_string(),
        });
    }
    let request = LlmRequest::new(prompt.clone())
        .with("question", question)
        .with("entity", entity)
        .with("candidates", render_candidates(candidates));
    let mut used = 0;
    let outcome = retry::bounded(theta, |n| {
        used = n;
        match gateway.complete(&request) {
            Err(e @ LlmError::Refused { .. }) => Attempt::Abort(e.to_string()),
            Err(e) => Attempt::Retry(e.to_string()),
            Ok(response) => match validate_vertex(&response.raw_text, candidates) {
                Ok(iri) => Attempt::Done(iri),
                Err(tag) => Attempt::Retry(format!("{tag:?}")),
            },
        }
    });
    outcome.map(|iri| (iri, used)).map_err(|e| MatchError::SelectionFailed {
        entity: entity.to_string(),
        attempts: e.attempts,
        reason: e.last,
    })
}

fn endpoint_vertex<'m>(term: &QirTerm, ent_to_vertex: &'m BTreeMap<String, String>) -> Option<&'m str> {
    match term {
        QirTerm::Entity(e) => ent_to_vertex.get(e).map(String::as_str),
        QirTerm::Variable(_) => None,
    }
}

/// Ranked predicates realizing `fact`, looked up in both orientations.
/// Returns `None` when neither endpoint is linked.
pub fn link_relation(
    fact: &Triple,
    ent_to_vertex: &BTreeMap<String, String>,
    embedder: &dyn Embedder,
    target: &dyn KgTarget,
    label_predicates: &[String],
) -> Result<Option<Vec<PredicateOption>>, MatchError> {
    let s = endpoint_vertex(&fact.subject, ent_to_vertex);
    let o = endpoint_vertex(&fact.object, ent_to_vertex);
    if s.is_none() && o.is_none() {
        return Ok(None);
    }
    let phrase = embedder.embed(&fact.relation)?;
    let mut options = Vec::new();
    for (direction, src, obj) in [(Direction::Forward, s, o), (Direction::Reversed, o, s)] {
        for iri in kg::predicates_between(target, label_predicates, src, obj)? {
            let score = cosine(&phrase, &embedder.embed(&kg::predicate_label(&iri))?);
            options.push(PredicateOption { iri, score, direction });
        }
    }
    sort_options(&mut options);
    Ok(Some(options))
}

/// Descending score; ties by IRI, then forward before reversed.
pub fn sort_options(options: &mut [PredicateOption]) {
    options.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.iri.cmp(&b.iri))
            .then_with(|| a.direction.cmp(&b.direction))
    });
}

pub struct LinkOutcome {
    pub maps: LinkingMaps,
    pub entities: Vec<EntityLinkTrace>,
}

/// Runs entity linking for every QIR entity, then relation linking for
/// every fact. The first entity that cannot be linked aborts the run.
pub struct Linker<'a> {
    pub gateway: &'a Gateway<'a>,
    pub prompts: &'a PromptLibrary,
    pub target: &'a dyn KgTarget,
    pub embedder: &'a dyn Embedder,
    pub config: &'a EngineConfig,
}

impl Linker<'_> {
    pub fn link(&self, question: &str, qir: &Qir) -> Result<LinkOutcome, MatchError> {
        let labels = &self.config.label_predicates;
        let mut maps = LinkingMaps::default();
        let mut traces = Vec::new();
        for entity in &qir.entities {
            let tokens = kg::tokenize(entity);
            if tokens.is_empty() {
                return Err(MatchError::NoCandidates { entity: entity.clone() });
            }
            let candidates = kg::keyword_vertex_search(self.target, labels, &tokens, self.config.vertex_limit)?;
            let (vertex, attempts) = select_vertex(
                self.gateway,
                &self.prompts.select_vertex,
                question,
                entity,
                &candidates,
                self.config.theta,
            )?;
            let label = candidates
                .iter()
                .find(|(iri, _)| *iri == vertex)
                .map(|(_, l)| l.clone())
                .unwrap_or_default();
            traces.push(EntityLinkTrace {
                entity: entity.clone(),
                candidates: candidates.len(),
                vertex: vertex.clone(),
                label,
                attempts,
            });
            maps.ent_to_vertex.insert(entity.clone(), vertex);
        }
        for (i, fact) in qir.facts.iter().enumerate() {
            let options = link_relation(fact, &maps.ent_to_vertex, self.embedder, self.target, labels)?;
            let mut options = match options {
                Some(o) => o,
                None => {
                    maps.unlinked_facts.push(i);
                    Vec::new()
                }
            };
            if let Some(cap) = self.config.predicate_candidate_cap {
                options.truncate(cap);
            }
            let merged = maps.rel_to_pred.entry(fact.relation.clone()).or_default();
            for opt in &options {
                match merged.iter_mut().find(|m| m.iri == opt.iri && m.direction == opt.direction) {
                    Some(existing) => existing.score = existing.score.max(opt.score),
                    None => merged.push(opt.clone()),
                }
            }
            sort_options(merged);
            maps.fact_predicates.push(options);
        }
        Ok(LinkOutcome { maps, entities: traces })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RDFS_LABEL;
    use crate::kg::TripleStore;
    use crate::llm::{ScriptRule, ScriptedBackend};
    use crate::model::QuestionForm;

    const R: &str = "http://desk.example.org/resource/";

    fn cands() -> Vec<(String, String)> {
        vec![
            (format!("{R}Intel"), "Intel".to_string()),
            (format!("{R}Intel_4004"), "Intel 4004".to_string()),
        ]
    }

    #[test]
    fn vertex_validator_cases() {
        assert_eq!(validate_vertex(r#"{"label":"Intel"}"#, &cands()), Ok(format!("{R}Intel")));
        assert_eq!(validate_vertex(r#"{"label":"intel 4004"}"#, &cands()), Ok(format!("{R}Intel_4004")));
        assert_eq!(
            validate_vertex(r#"{"label":"Japanese musical instruments"}"#, &cands()),
            Err(VertexFailure::NotInCandidates)
        );
        assert_eq!(validate_vertex("not json", &cands()), Err(VertexFailure::MalformedJson));
        assert_eq!(validate_vertex(r#"{"label": 3}"#, &cands()), Err(VertexFailure::MalformedJson));
    }

    #[test]
    fn selection_retries_until_valid() {
        let backend = ScriptedBackend::new(vec![ScriptRule::reply("select_vertex", r#"{"label":"Intel"}"#)
            .garbage_first(1, r#"{"label":"AMD"}"#)])
        .unwrap();
        let gw = Gateway::new(&backend);
        let lib = PromptLibrary::builtin();
        let (iri, attempts) = select_vertex(&gw, &lib.select_vertex, "Who founded Intel?", "Intel", &cands(), 3).unwrap();
        assert_eq!((iri.as_str(), attempts), (format!("{R}Intel").as_str(), 2));
        assert_eq!(gw.calls(), 2);

        let bad = ScriptedBackend::new(vec![ScriptRule::reply("select_vertex", "nope")]).unwrap();
        let gw = Gateway::new(&bad);
        let err = select_vertex(&gw, &lib.select_vertex, "q", "Intel", &cands(), 3).unwrap_err();
        assert!(matches!(err, MatchError::SelectionFailed { attempts: 3, .. }));
        assert_eq!(gw.calls(), 3);
    }

    #[test]
    fn relation_linking_directions_and_unlinked() {
        let store = TripleStore::from_ntriples(include_str!("../../data/desk-kg.nt"), &[RDFS_LABEL.to_string()]).unwrap();
        let labels = vec![RDFS_LABEL.to_string()];
        let emb = TrigramEmbedder::default();
        let mut ev = BTreeMap::new();
        ev.insert("Michelle".to_string(), format!("{R}Michelle_Obama"));
        ev.insert("Barack Obama".to_string(), format!("{R}Barack_Obama"));
        let spouse = link_relation(&Triple::new("Michelle", "spouse", "Barack Obama"), &ev, &emb, &store, &labels)
            .unwrap()
            .unwrap();
        assert_eq!(spouse.len(), 1);
        assert!((spouse[0].score - 1.0).abs() < 1e-9);
        assert_eq!(spouse[0].direction, Direction::Forward);
        assert_eq!(link_relation(&Triple::new("?a", "knows", "?b"), &ev, &emb, &store, &labels).unwrap(), None);
    }

    #[test]
    fn linker_orders_entities_before_relations() {
        let store = TripleStore::from_ntriples(include_str!("../../data/desk-kg.nt"), &[RDFS_LABEL.to_string()]).unwrap();
        let backend = ScriptedBackend::new(vec![ScriptRule::template("select_vertex", r#"{"label": "{entity}"}"#)]).unwrap();
        let gw = Gateway::new(&backend);
        let lib = PromptLibrary::builtin();
        let config = EngineConfig::default();
        let linker = Linker {
            gateway: &gw,
            prompts: &lib,
            target: &store,
            embedder: &TrigramEmbedder::default(),
            config: &config,
        };
        let qir = Qir::from_facts(vec![Triple::new("?who", "founded", "Intel")], QuestionForm::List, None).unwrap();
        let out = linker.link("Who founded Intel?", &qir).unwrap();
        assert_eq!(out.maps.ent_to_vertex["Intel"], format!("{R}Intel"));
        let preds: Vec<&str> = out.maps.fact_predicates[0].iter().map(|p| p.iri.as_str()).collect();
        assert_eq!(preds.len(), 4);
        assert!(preds[3].ends_with("/location"));
        assert!(out.maps.fact_predicates[0].iter().all(|p| p.direction == Direction::Reversed));
        assert_eq!(backend.calls_for("select_vertex"), 1);
    }
}

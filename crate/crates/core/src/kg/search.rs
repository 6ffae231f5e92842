//! Graph lookups used by linking: keyword vertex retrieval, predicates
//! between linked vertices and label helpers.

use super::query::{ContainsFilter, PatternTerm, SparqlQuery, TriplePattern};
use super::{KgError, KgTarget, ResultSet};

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "de", "der", "die", "for", "from", "in", "into", "is", "of", "on",
    "or", "s", "the", "to", "with",
];

/// Splits an entity mention into lowercase search tokens: non-alphanumeric
/// characters separate tokens, stopwords are dropped (unless nothing else
/// remains) and the result is sorted and de-duplicated.
pub fn tokenize(text: &str) -> Vec<String> {
    let all: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect();
    let content: Vec<String> = all.iter().filter(|t| !STOPWORDS.contains(&t.as_str())).cloned().collect();
    let mut tokens = if content.is_empty() { all } else { content };
    tokens.sort();
    tokens.dedup();
    tokens
}

/// Vertices with a label containing every token (case-insensitive), as
/// `(iri, label)` sorted by label then IRI and capped at `limit`.
pub fn keyword_vertex_search(
    target: &dyn KgTarget,
    label_predicates: &[String],
    tokens: &[String],
    limit: usize,
) -> Result<Vec<(String, String)>, KgError> {
    let mut tokens: Vec<String> = tokens
        .iter()
        .map(|t| t.trim().to_lowercase())
        .filter(|t| !t.is_empty())
        .collect();
    tokens.sort();
    tokens.dedup();
    if tokens.is_empty() {
        return Err(KgError::NoTokens);
    }
    let limit = limit.max(1);
    let mut found: Vec<(String, String)> = Vec::new();
    for lp in label_predicates {
        let mut query = SparqlQuery::select(
            &["label", "v"],
            vec![TriplePattern::new(PatternTerm::var("v"), PatternTerm::iri(lp), PatternTerm::var("label"))],
        )
        .with_limit(limit);
        for t in &tokens {
            query = query.with_filter(ContainsFilter::new("label", t));
        }
        if let ResultSet::Rows { rows, .. } = target.execute(&query)? {
            for row in rows {
                if let (Some(iri), Some(label)) = (row.get("v").and_then(|t| t.as_iri()), row.get("label")) {
                    found.push((label.value().to_string(), iri.to_string()));
                }
            }
        }
    }
    found.sort();
    found.dedup();
    found.truncate(limit);
    Ok(found.into_iter().map(|(label, iri)| (iri, label)).collect())
}

/// Distinct predicates on triples `source ?p object`, where either endpoint
/// may be unbound. Label predicates are excluded; the list is sorted.
pub fn predicates_between(
    target: &dyn KgTarget,
    label_predicates: &[String],
    source: Option<&str>,
    object: Option<&str>,
) -> Result<Vec<String>, KgError> {
    if source.is_none() && object.is_none() {
        return Err(KgError::UnlinkedRelation);
    }
    let s = source.map_or_else(|| PatternTerm::var("s"), PatternTerm::iri);
    let o = object.map_or_else(|| PatternTerm::var("o"), PatternTerm::iri);
    let query = SparqlQuery::select(&["p"], vec![TriplePattern::new(s, PatternTerm::var("p"), o)]);
    let mut preds: Vec<String> = match target.execute(&query)? {
        ResultSet::Rows { rows, .. } => rows
            .iter()
            .filter_map(|r| r.get("p").and_then(|t| t.as_iri()).map(str::to_string))
            .filter(|p| !label_predicates.contains(p))
            .collect(),
        _ => Vec::new(),
    };
    preds.sort();
    preds.dedup();
    Ok(preds)
}

/// First label of `iri` under the label predicates, if any.
pub fn label_of(target: &dyn KgTarget, label_predicates: &[String], iri: &str) -> Result<Option<String>, KgError> {
    for lp in label_predicates {
        let query = SparqlQuery::select(
            &["label"],
            vec![TriplePattern::new(PatternTerm::iri(iri), PatternTerm::iri(lp), PatternTerm::var("label"))],
        )
        .with_limit(1);
        if let ResultSet::Rows { rows, .. } = target.execute(&query)? {
            if let Some(label) = rows.first().and_then(|r| r.get("label")) {
                return Ok(Some(label.value().to_string()));
            }
        }
    }
    Ok(None)
}

/// Human-readable predicate name: the IRI's final segment with camelCase,
/// underscores and hyphens split into lowercase words.
pub fn predicate_label(iri: &str) -> String {
    let trimmed = iri.trim_end_matches(['/', '#']);
    let segment = trimmed.rsplit(['/', '#']).next().filter(|s| !s.is_empty()).unwrap_or(trimmed);
    let mut out = String::with_capacity(segment.len() + 4);
    let mut prev: Option<char> = None;
    for c in segment.chars() {
        if c == '_' || c == '-' || c.is_whitespace() {
            out.push(' ');
        } else {
            if c.is_uppercase() && prev.is_some_and(|p| p.is_lowercase() || p.is_ascii_digit()) {
                out.push(' ');
            }
            out.extend(c.to_lowercase());
        }
        prev = Some(c);
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

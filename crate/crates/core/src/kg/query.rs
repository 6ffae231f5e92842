//! The SPARQL subset the planner emits: basic graph patterns with
//! case-insensitive `CONTAINS` label filters, `DISTINCT`, `LIMIT`,
//! `COUNT(DISTINCT ?x)` and `ASK`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Term;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryForm {
    Select,
    Ask,
    SelectCount,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternTerm {
    /// Variable name without the leading `?`.
    Var(String),
    Const(Term),
}

impl PatternTerm {
    pub fn var(name: &str) -> PatternTerm {
        PatternTerm::Var(name.trim_start_matches('?').to_string())
    }

    pub fn iri(iri: &str) -> PatternTerm {
        PatternTerm::Const(Term::iri(iri))
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            PatternTerm::Var(v) => Some(v),
            PatternTerm::Const(_) => None,
        }
    }
}

impl fmt::Display for PatternTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternTerm::Var(v) => write!(f, "?{v}"),
            PatternTerm::Const(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub predicate: PatternTerm,
    pub object: PatternTerm,
}

impl TriplePattern {
    pub fn new(subject: PatternTerm, predicate: PatternTerm, object: PatternTerm) -> Self {
        TriplePattern {
            subject,
            predicate,
            object,
        }
    }

    pub fn terms(&self) -> [&PatternTerm; 3] {
        [&self.subject, &self.predicate, &self.object]
    }
}

/// `FILTER(CONTAINS(LCASE(STR(?var)), "token"))`; `token` is stored lowercase.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContainsFilter {
    pub var: String,
    pub token: String,
}

impl ContainsFilter {
    pub fn new(var: &str, token: &str) -> Self {
        ContainsFilter {
            var: var.trim_start_matches('?').to_string(),
            token: token.to_lowercase(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueryError {
    #[error("query has no triple patterns")]
    NoPatterns,
    #[error("SELECT needs a non-empty projection")]
    EmptyProjection,
    #[error("ASK takes no projection")]
    AskProjection,
    #[error("COUNT counts exactly one variable")]
    CountArity,
    #[error("variable ?{0} is not bound by any pattern")]
    UnboundVariable(String),
    #[error("LIMIT must be positive")]
    ZeroLimit,
    #[error("predicate position cannot hold a literal")]
    LiteralPredicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SparqlQuery {
    pub form: QueryForm,
    #[serde(default)]
    pub distinct: bool,
    pub patterns: Vec<TriplePattern>,
    #[serde(default)]
    pub filters: Vec<ContainsFilter>,
    /// Projected variables; for `SelectCount` the single counted variable.
    #[serde(default)]
    pub projection: Vec<String>,
    #[serde(default)]
    pub limit: Option<usize>,
}

impl SparqlQuery {
    pub fn select(projection: &[&str], patterns: Vec<TriplePattern>) -> Self {
        SparqlQuery {
            form: QueryForm::Select,
            distinct: true,
            patterns,
            filters: Vec::new(),
            projection: projection.iter().map(|v| v.trim_start_matches('?').to_string()).collect(),
            limit: None,
        }
    }

    pub fn ask(patterns: Vec<TriplePattern>) -> Self {
        SparqlQuery {
            form: QueryForm::Ask,
            distinct: false,
            patterns,
            filters: Vec::new(),
            projection: Vec::new(),
            limit: None,
        }
    }

    pub fn count(var: &str, patterns: Vec<TriplePattern>) -> Self {
        SparqlQuery {
            form: QueryForm::SelectCount,
            distinct: true,
            patterns,
            filters: Vec::new(),
            projection: vec![var.trim_start_matches('?').to_string()],
            limit: None,
        }
    }

    pub fn with_filter(mut self, filter: ContainsFilter) -> Self {
        self.filters.push(filter);
        self
    }

    pub fn with_limit(mut self, limit: usize) -> Self {
        self.limit = Some(limit);
        self
    }

    /// Variables mentioned by the patterns, sorted.
    pub fn pattern_vars(&self) -> BTreeSet<&str> {
        self.patterns
            .iter()
            .flat_map(|p| p.terms())
            .filter_map(PatternTerm::as_var)
            .collect()
    }

    /// Constant IRIs in predicate position, in pattern order.
    pub fn predicates(&self) -> Vec<&str> {
        self.patterns
            .iter()
            .filter_map(|p| match &p.predicate {
                PatternTerm::Const(t) => t.as_iri(),
                PatternTerm::Var(_) => None,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        if self.patterns.is_empty() {
            return Err(QueryError::NoPatterns);
        }
        if self
            .patterns
            .iter()
            .any(|p| matches!(&p.predicate, PatternTerm::Const(t) if t.is_literal()))
        {
            return Err(QueryError::LiteralPredicate);
        }
        match self.form {
            QueryForm::Select if self.projection.is_empty() => return Err(QueryError::EmptyProjection),
            QueryForm::Ask if !self.projection.is_empty() => return Err(QueryError::AskProjection),
            QueryForm::SelectCount if self.projection.len() != 1 => return Err(QueryError::CountArity),
            _ => {}
        }
        if self.limit == Some(0) {
            return Err(QueryError::ZeroLimit);
        }
        let vars = self.pattern_vars();
        for v in self.projection.iter().chain(self.filters.iter().map(|f| &f.var)) {
            if !vars.contains(v.as_str()) {
                return Err(QueryError::UnboundVariable(v.clone()));
            }
        }
        Ok(())
    }
}

impl fmt::Display for SparqlQuery {
    /// Single-line SPARQL text accepted by standard endpoints and by
    /// [`super::parse_query`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.form {
            QueryForm::Ask => f.write_str("ASK")?,
            QueryForm::Select => {
                f.write_str("SELECT")?;
                if self.distinct {
                    f.write_str(" DISTINCT")?;
                }
                for v in &self.projection {
                    write!(f, " ?{v}")?;
                }
            }
            QueryForm::SelectCount => {
                let v = self.projection.first().map(String::as_str).unwrap_or("x");
                if self.distinct {
                    write!(f, "SELECT (COUNT(DISTINCT ?{v}) AS ?count)")?;
                } else {
                    write!(f, "SELECT (COUNT(?{v}) AS ?count)")?;
                }
            }
        }
        f.write_str(" WHERE {")?;
        for p in &self.patterns {
            write!(f, " {} {} {} .", p.subject, p.predicate, p.object)?;
        }
        for flt in &self.filters {
            write!(f, " FILTER(CONTAINS(LCASE(STR(?{})), {}))", flt.var, Term::literal(flt.token.as_str()))?;
        }
        f.write_str(" }")?;
        if let Some(limit) = self.limit {
            write!(f, " LIMIT {limit}")?;
        }
        Ok(())
    }
}

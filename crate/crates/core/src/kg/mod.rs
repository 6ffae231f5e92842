//! Knowledge-graph access: RDF terms, the emitted SPARQL subset, an embedded
//! in-memory store and a SPARQL 1.1 protocol client behind one trait.

mod http;
mod ntriples;
mod parse;
mod query;
mod search;
mod store;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpEndpoint;
pub use ntriples::{parse_ntriples, NTriplesError};
pub use parse::{parse_query, ParseError};
pub use query::{ContainsFilter, PatternTerm, QueryError, QueryForm, SparqlQuery, TriplePattern};
pub use search::{
    keyword_vertex_search, label_of, predicate_label, predicates_between, tokenize,
};
pub use store::{StoreLoadError, TripleStore};

pub const XSD: &str = "http://www.w3.org/2001/XMLSchema#";

/// An RDF term as stored or returned by an endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Term {
    Iri {
        value: String,
    },
    Literal {
        value: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        datatype: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lang: Option<String>,
    },
    Blank {
        value: String,
    },
}

impl Term {
    pub fn iri(value: impl Into<String>) -> Term {
        Term::Iri { value: value.into() }
    }

    pub fn literal(value: impl Into<String>) -> Term {
        Term::Literal {
            value: value.into(),
            datatype: None,
            lang: None,
        }
    }

    pub fn typed(value: impl Into<String>, datatype: impl Into<String>) -> Term {
        Term::Literal {
            value: value.into(),
            datatype: Some(datatype.into()),
            lang: None,
        }
    }

    pub fn lang(value: impl Into<String>, lang: impl Into<String>) -> Term {
        Term::Literal {
            value: value.into(),
            datatype: None,
            lang: Some(lang.into()),
        }
    }

    /// IRI text, lexical form or blank-node label.
    pub fn value(&self) -> &str {
        match self {
            Term::Iri { value } | Term::Literal { value, .. } | Term::Blank { value } => value,
        }
    }

    pub fn as_iri(&self) -> Option<&str> {
        match self {
            Term::Iri { value } => Some(value),
            _ => None,
        }
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, Term::Literal { .. })
    }
}

impl fmt::Display for Term {
    /// N-Triples / SPARQL surface syntax.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri { value } => write!(f, "<{value}>"),
            Term::Blank { value } => write!(f, "_:{value}"),
            Term::Literal { value, datatype, lang } => {
                f.write_str("\"")?;
                for c in value.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\r' => f.write_str("\\r")?,
                        '\t' => f.write_str("\\t")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")?;
                if let Some(lang) = lang {
                    write!(f, "@{lang}")
                } else if let Some(dt) = datatype {
                    write!(f, "^^<{dt}>")
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// One solution: variable name (without `?`) to bound term.
pub type Binding = BTreeMap<String, Term>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResultSet {
    Rows { vars: Vec<String>, rows: Vec<Binding> },
    Boolean { value: bool },
    Count { value: u64 },
}

impl ResultSet {
    pub fn is_empty(&self) -> bool {
        match self {
            ResultSet::Rows { rows, .. } => rows.is_empty(),
            ResultSet::Boolean { value } => !value,
            ResultSet::Count { value } => *value == 0,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ResultSet::Rows { rows, .. } => rows.len(),
            _ => 1,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KgError {
    #[error("invalid query: {0}")]
    Query(#[from] QueryError),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed results body: {0}")]
    MalformedResults(String),
    #[error("endpoint rejected query: {0}")]
    Rejected(String),
    #[error("unlinked relation: both endpoints are unbound")]
    UnlinkedRelation,
    #[error("search needs at least one non-empty token")]
    NoTokens,
}

/// Anything that can evaluate the emitted SPARQL subset.
pub trait KgTarget: Send + Sync {
    fn execute(&self, query: &SparqlQuery) -> Result<ResultSet, KgError>;

    /// Short human-readable description for logs and traces.
    fn describe(&self) -> String;
}

//! SPARQL 1.1 protocol client reading `application/sparql-results+json`.

use std::time::Duration;

use reqwest::blocking::Client;
use serde_json::Value;

use super::query::{QueryForm, SparqlQuery};
use super::{Binding, KgError, KgTarget, ResultSet, Term};

pub struct HttpEndpoint {
    url: String,
    client: Client,
}

impl HttpEndpoint {
    pub fn new(url: &str) -> Result<Self, KgError> {
        Self::with_timeout(url, Duration::from_secs(60))
    }

    pub fn with_timeout(url: &str, timeout: Duration) -> Result<Self, KgError> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| KgError::Transport(e.to_string()))?;
        Ok(HttpEndpoint {
            url: url.to_string(),
            client,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl KgTarget for HttpEndpoint {
    fn execute(&self, query: &SparqlQuery) -> Result<ResultSet, KgError> {
        query.validate()?;
        let text = query.to_string();
        let response = self
            .client
            .post(&self.url)
            .header(reqwest::header::ACCEPT, "application/sparql-results+json")
            .form(&[("query", text.as_str())])
            .send()
            .map_err(|e| KgError::Transport(e.to_string()))?;
        let status = response.status();
        let body = response.text().map_err(|e| KgError::Transport(e.to_string()))?;
        if status.is_client_error() {
            return Err(KgError::Rejected(format!("HTTP {status}: {}", body.trim())));
        }
        if !status.is_success() {
            return Err(KgError::Transport(format!("HTTP {status}: {}", body.trim())));
        }
        parse_results(query, &body)
    }

    fn describe(&self) -> String {
        format!("SPARQL endpoint {}", self.url)
    }
}

/// Parses a SPARQL JSON results document for `query`'s form.
pub(crate) fn parse_results(query: &SparqlQuery, body: &str) -> Result<ResultSet, KgError> {
    let bad = |m: &str| KgError::MalformedResults(m.to_string());
    let doc: Value = serde_json::from_str(body).map_err(|e| KgError::MalformedResults(e.to_string()))?;
    if query.form == QueryForm::Ask {
        return doc
            .get("boolean")
            .and_then(Value::as_bool)
            .map(|value| ResultSet::Boolean { value })
            .ok_or_else(|| bad("missing boolean"));
    }
    let vars: Vec<String> = doc
        .pointer("/head/vars")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing head.vars"))?
        .iter()
        .filter_map(|v| v.as_str().map(str::to_string))
        .collect();
    let bindings = doc
        .pointer("/results/bindings")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing results.bindings"))?;
    let mut rows = Vec::with_capacity(bindings.len());
    for b in bindings {
        let obj = b.as_object().ok_or_else(|| bad("binding is not an object"))?;
        let mut row = Binding::new();
        for (name, cell) in obj {
            row.insert(name.clone(), parse_term(cell)?);
        }
        rows.push(row);
    }
    if query.form == QueryForm::SelectCount {
        let name = vars.first().ok_or_else(|| bad("count result has no variable"))?;
        let value = match rows.first().and_then(|r| r.get(name)) {
            None => 0,
            Some(t) => parse_count(t.value()).ok_or_else(|| bad("count is not a non-negative integer"))?,
        };
        return Ok(ResultSet::Count { value });
    }
    Ok(ResultSet::Rows { vars, rows })
}

fn parse_count(text: &str) -> Option<u64> {
    let text = text.trim();
    text.parse::<u64>().ok().or_else(|| {
        // Some endpoints return decimals such as "2.0e0".
        let f: f64 = text.parse().ok()?;
        (f >= 0.0 && f.fract() == 0.0 && f <= u64::MAX as f64).then_some(f as u64)
    })
}

fn parse_term(cell: &Value) -> Result<Term, KgError> {
    let bad = |m: &str| KgError::MalformedResults(m.to_string());
    let kind = cell.get("type").and_then(Value::as_str).ok_or_else(|| bad("binding without type"))?;
    let value = cell
        .get("value")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("binding without value"))?
        .to_string();
    let lang = cell.get("xml:lang").and_then(Value::as_str);
    let datatype = cell.get("datatype").and_then(Value::as_str);
    Ok(match kind {
        "uri" => Term::Iri { value },
        "bnode" => Term::Blank { value },
        "literal" | "typed-literal" => match (lang, datatype) {
            (Some(l), _) => Term::lang(value, l),
            (None, Some(dt)) => Term::typed(value, dt),
            (None, None) => Term::literal(value),
        },
        other => return Err(KgError::MalformedResults(format!("unknown binding type {other:?}"))),
    })
}

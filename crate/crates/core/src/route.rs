//! Agent routing: the allowed hand-offs between agents as an explicit edge
//! table, and a per-turn walker that enforces it.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RouteTag {
    #[serde(rename = "chat_agent")]
    Chat,
    #[serde(rename = "classifier_agent")]
    Classifier,
    #[serde(rename = "rephraser_agent")]
    Rephraser,
    #[serde(rename = "qir_agent")]
    Qir,
    #[serde(rename = "matching_agent")]
    Matching,
    #[serde(rename = "query_agent")]
    Query,
    #[serde(rename = "END")]
    End,
}

impl RouteTag {
    pub fn as_str(self) -> &'static str {
        match self {
            RouteTag::Chat => "chat_agent",
            RouteTag::Classifier => "classifier_agent",
            RouteTag::Rephraser => "rephraser_agent",
            RouteTag::Qir => "qir_agent",
            RouteTag::Matching => "matching_agent",
            RouteTag::Query => "query_agent",
            RouteTag::End => "END",
        }
    }
}

impl fmt::Display for RouteTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Every permitted `from -> to` hand-off.
pub const EDGES: &[(RouteTag, RouteTag)] = &[
    (RouteTag::Chat, RouteTag::Qir),
    (RouteTag::Chat, RouteTag::Query),
    (RouteTag::Chat, RouteTag::End),
    (RouteTag::Qir, RouteTag::Classifier),
    (RouteTag::Qir, RouteTag::Chat),
    (RouteTag::Classifier, RouteTag::Rephraser),
    (RouteTag::Classifier, RouteTag::Qir),
    (RouteTag::Classifier, RouteTag::Chat),
    (RouteTag::Rephraser, RouteTag::Qir),
    (RouteTag::Query, RouteTag::Matching),
    (RouteTag::Query, RouteTag::Chat),
    (RouteTag::Matching, RouteTag::Query),
    (RouteTag::Matching, RouteTag::Chat),
];

pub fn is_allowed(from: RouteTag, to: RouteTag) -> bool {
    EDGES.contains(&(from, to))
}

/// Upper bound on hand-offs in one turn; the longest legal turn uses 10.
pub const STEP_CAP: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RouteError {
    #[error("illegal hand-off {from} -> {to}")]
    Illegal { from: RouteTag, to: RouteTag },
    #[error("turn exceeded {0} hand-offs")]
    StepCap(usize),
    #[error("turn already ended")]
    Ended,
}

/// Path taken during one turn, starting at the chat agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    path: Vec<RouteTag>,
}

impl Default for Route {
    fn default() -> Self {
        Route {
            path: vec![RouteTag::Chat],
        }
    }
}

impl Route {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn current(&self) -> RouteTag {
        *self.path.last().expect("route path is never empty")
    }

    pub fn path(&self) -> &[RouteTag] {
        &self.path
    }

    pub fn advance(&mut self, to: RouteTag) -> Result<(), RouteError> {
        let from = self.current();
        if from == RouteTag::End {
            return Err(RouteError::Ended);
        }
        if !is_allowed(from, to) {
            return Err(RouteError::Illegal { from, to });
        }
        if self.path.len() > STEP_CAP {
            return Err(RouteError::StepCap(STEP_CAP));
        }
        self.path.push(to);
        Ok(())
    }

    /// Walks back to the chat agent along legal edges and ends the turn.
    pub fn finish(&mut self) -> Result<(), RouteError> {
        while self.current() != RouteTag::Chat {
            let from = self.current();
            let to = if is_allowed(from, RouteTag::Chat) {
                RouteTag::Chat
            } else if from == RouteTag::Rephraser {
                RouteTag::Qir
            } else {
                return Err(RouteError::Illegal { from, to: RouteTag::Chat });
            };
            self.advance(to)?;
        }
        self.advance(RouteTag::End)
    }
}

//! Per-conversation state: the dialogue history plus every turn's result and
//! trace.

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::config::EngineConfig;
use crate::model::Dialogue;
use crate::orchestrator::{TurnResult, TurnTrace};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    /// Effective configuration for this session, including overrides.
    pub config: EngineConfig,
    pub dialogue: Dialogue,
    pub results: Vec<TurnResult>,
    pub traces: Vec<TurnTrace>,
}

impl SessionState {
    pub fn new(config: EngineConfig) -> Self {
        SessionState {
            id: Uuid::new_v4().to_string(),
            config,
            dialogue: Dialogue::new(),
            results: Vec::new(),
            traces: Vec::new(),
        }
    }

    pub fn turn_count(&self) -> usize {
        self.dialogue.len()
    }

    /// Trace of the 1-based `turn`.
    pub fn trace(&self, turn: usize) -> Option<&TurnTrace> {
        turn.checked_sub(1).and_then(|i| self.traces.get(i))
    }
}

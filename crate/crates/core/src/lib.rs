//! Conversational question answering over RDF knowledge graphs.
//!
//! A turn flows through four stages: contextual understanding turns the
//! (possibly context-dependent) question into a [`model::Qir`], matching
//! grounds its entities and relations in the graph, planning expands the
//! grounded representation into candidate SPARQL queries and prunes them with
//! an LLM-selected predicate subset, and execution aggregates the bindings.
//! [`orchestrator::Engine`] wires the stages together behind a small routing
//! table and keeps the dialogue history.

pub mod config;
pub mod desk;
pub mod eval;
pub mod jsonout;
pub mod kg;
pub mod llm;
pub mod matching;
pub mod model;
pub mod orchestrator;
pub mod planning;
pub mod retry;
pub mod route;
pub mod session;
pub mod understanding;

pub use config::EngineConfig;
pub use model::{Answer, AnswerKind, Dialogue, Qir, QuestionForm, Triple};
pub use orchestrator::{Engine, TurnResult};
pub use session::SessionState;

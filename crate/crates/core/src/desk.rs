//! The bundled desk-scale fixture: a small graph mixing encyclopedic and
//! bibliographic facts, a rules file for the scripted backend that answers
//! every fixture question, and the benchmark files that go with them.

use std::sync::Arc;

use crate::config::{BackendKind, EngineConfig, RDFS_LABEL};
use crate::eval::{load_bench, BenchmarkItem};
use crate::kg::TripleStore;
use crate::llm::ScriptedBackend;
use crate::matching::TrigramEmbedder;
use crate::orchestrator::Engine;

pub const GRAPH: &str = include_str!("../data/desk-kg.nt");
pub const SCRIPT: &str = include_str!("../data/desk-script.json");
pub const SINGLE_BENCH: &str = include_str!("../data/bench/desk-single.json");
pub const DIALOGUE_BENCH: &str = include_str!("../data/bench/desk-dialogues.json");
pub const ABSENT_BENCH: &str = include_str!("../data/bench/absent-facts.json");

pub const DBLP_CREATOR_NAME: &str = "http://desk.example.org/dblp/primaryCreatorName";
pub const DBLP_TITLE: &str = "http://desk.example.org/dblp/title";

/// Defaults plus the bibliographic label predicates and the scripted backend.
pub fn config() -> EngineConfig {
    let mut config = EngineConfig {
        label_predicates: vec![RDFS_LABEL.to_string(), DBLP_CREATOR_NAME.to_string(), DBLP_TITLE.to_string()],
        ..EngineConfig::default()
    };
    config.llm.kind = BackendKind::Scripted;
    config
}

pub fn store(label_predicates: &[String]) -> TripleStore {
    TripleStore::from_ntriples(GRAPH, label_predicates).expect("bundled graph parses")
}

pub fn backend() -> ScriptedBackend {
    ScriptedBackend::from_json_str(SCRIPT).expect("bundled script parses")
}

/// Engine over the fixture with `config`, returning the backend so callers
/// can inspect or extend the recorded calls.
pub fn engine_with(config: EngineConfig, backend: ScriptedBackend) -> (Engine, Arc<ScriptedBackend>) {
    let backend = Arc::new(backend);
    let kg = Arc::new(store(&config.label_predicates));
    let engine = Engine::new(config, backend.clone(), kg, Arc::new(TrigramEmbedder::default()));
    (engine, backend)
}

pub fn engine() -> Engine {
    engine_with(config(), backend()).0
}

pub fn single_items() -> Vec<BenchmarkItem> {
    load_bench(SINGLE_BENCH).expect("bundled bench parses")
}

pub fn dialogue_items() -> Vec<BenchmarkItem> {
    load_bench(DIALOGUE_BENCH).expect("bundled bench parses")
}

pub fn absent_items() -> Vec<BenchmarkItem> {
    load_bench(ABSENT_BENCH).expect("bundled bench parses")
}

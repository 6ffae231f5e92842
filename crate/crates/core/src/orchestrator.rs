//! Turn orchestration: runs understanding, linking and planning for one user
//! question, following the agent routing table, and records the outcome in
//! the session.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{BackendKind, EmbedderKind, EngineConfig, SystemMode};
use crate::kg::{label_of, HttpEndpoint, KgError, KgTarget, StoreLoadError, TripleStore};
use crate::llm::{Gateway, HttpBackend, LlmBackend, LlmError, LlmRequest, PromptLibrary, ScriptError, ScriptedBackend};
use crate::matching::{EmbedError, Embedder, EntityLinkTrace, HttpEmbedder, Linker, LinkingMaps, TrigramEmbedder};
use crate::model::{build_context, Answer, AnswerKind, Qir, QuestionContext};
use crate::planning::{PlanFailure, PlanTrace, Planner};
use crate::retry::{self, Attempt};
use crate::route::{Route, RouteError, RouteTag};
use crate::session::SessionState;
use crate::understanding::{self, clean_rewrite, QuestionType};

/// Reply used whenever a turn produced no answers.
pub const NOT_FOUND_TEXT: &str = "I could not find an answer to that question in the knowledge graph.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradedFlag {
    /// Rephrasing never validated; the original question was used.
    RephraseFallback,
    /// Predicate filtering never validated; every candidate was executed.
    PredicateFilterFallback,
    /// A fact with two variable endpoints was left out of the queries.
    UnlinkedRelation,
    /// Some, but not all, selected queries failed at the endpoint.
    QueryFailures,
    TranslationFallback,
    ReformulationFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Understanding,
    Linking,
    Planning,
    Routing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnError {
    pub stage: Stage,
    pub message: String,
}

impl TurnError {
    fn new(stage: Stage, err: impl std::fmt::Display) -> Self {
        TurnError {
            stage,
            message: err.to_string(),
        }
    }
}

impl From<RouteError> for TurnError {
    fn from(e: RouteError) -> Self {
        TurnError::new(Stage::Routing, e)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TurnStats {
    pub llm_calls: usize,
    /// Candidates produced before truncation.
    pub generated_queries: usize,
    /// Candidates kept after truncation.
    pub candidate_queries: usize,
    pub executed_queries: usize,
    pub understanding_ms: f64,
    pub linking_ms: f64,
    pub planning_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResult {
    /// 1-based position in the dialogue.
    pub turn: usize,
    pub question: String,
    pub standalone_question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_type: Option<QuestionType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qir: Option<Qir>,
    pub answers: Vec<Answer>,
    pub final_text: String,
    pub degraded: Vec<DegradedFlag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<TurnError>,
    /// `<session id>/<turn>`, resolvable through the trace endpoint.
    pub trace_ref: String,
    pub stats: TurnStats,
}

/// Everything an operator needs to replay a turn's decisions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TurnTrace {
    pub session_id: String,
    pub turn: usize,
    pub question: String,
    pub route: Vec<RouteTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translated_question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_type: Option<QuestionType>,
    pub context: QuestionContext,
    pub standalone_question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qir: Option<Qir>,
    pub entity_links: Vec<EntityLinkTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linking: Option<LinkingMaps>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<TurnError>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TurnRejected {
    #[error("question must not be empty")]
    EmptyQuestion,
}

#[derive(Debug, Error)]
pub enum EngineBuildError {
    #[error("configure either store_file or endpoint_url")]
    NoGraph,
    #[error("scripted backend needs llm.script")]
    NoScript,
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Store(#[from] StoreLoadError),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

pub struct Engine {
    config: EngineConfig,
    llm: Arc<dyn LlmBackend>,
    kg: Arc<dyn KgTarget>,
    embedder: Arc<dyn Embedder>,
    prompts: PromptLibrary,
}

impl Engine {
    pub fn new(config: EngineConfig, llm: Arc<dyn LlmBackend>, kg: Arc<dyn KgTarget>, embedder: Arc<dyn Embedder>) -> Self {
        Engine {
            config,
            llm,
            kg,
            embedder,
            prompts: PromptLibrary::builtin(),
        }
    }

    /// Builds every component the configuration names. A local store file
    /// takes precedence over a remote endpoint.
    pub fn from_config(config: EngineConfig) -> Result<Self, EngineBuildError> {
        config.validate()?;
        let kg: Arc<dyn KgTarget> = match (&config.store_file, &config.endpoint_url) {
            (Some(path), _) => Arc::new(TripleStore::load_file(path, &config.label_predicates)?),
            (None, Some(url)) => Arc::new(HttpEndpoint::new(url)?),
            (None, None) => return Err(EngineBuildError::NoGraph),
        };
        let llm: Arc<dyn LlmBackend> = match config.llm.kind {
            BackendKind::OpenAi => Arc::new(HttpBackend::from_config(&config.llm)?),
            BackendKind::Scripted => {
                let path = config.llm.script.as_deref().ok_or(EngineBuildError::NoScript)?;
                Arc::new(ScriptedBackend::from_file(path)?)
            }
        };
        let embedder: Arc<dyn Embedder> = match config.embedder.kind {
            EmbedderKind::Trigram => Arc::new(TrigramEmbedder::default()),
            EmbedderKind::Http => Arc::new(HttpEmbedder::from_config(&config.embedder)?),
        };
        Ok(Engine::new(config, llm, kg, embedder))
    }

    pub fn with_prompts(mut self, prompts: PromptLibrary) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn with_config(mut self, config: EngineConfig) -> Self {
        self.config = config;
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn kg(&self) -> &dyn KgTarget {
        self.kg.as_ref()
    }

    pub fn new_session(&self) -> SessionState {
        SessionState::new(self.config.clone())
    }

    /// Answers one question and appends it to the session's dialogue.
    ///
    /// Stage failures do not reject the turn: the question is still recorded
    /// with an empty answer list and the failure is reported in
    /// [`TurnResult::error`].
    pub fn process_turn(&self, session: &mut SessionState, question: &str) -> Result<TurnResult, TurnRejected> {
        let question = question.trim();
        if question.is_empty() {
            return Err(TurnRejected::EmptyQuestion);
        }
        let started = Instant::now();
        let config = session.config.clone();
        let turn = session.dialogue.len() + 1;
        let gateway = Gateway::new(self.llm.as_ref());
        let mut route = Route::new();
        let mut trace = TurnTrace {
            session_id: session.id.clone(),
            turn,
            question: question.to_string(),
            context: build_context(&session.dialogue, config.context_limit),
            standalone_question: question.to_string(),
            ..Default::default()
        };
        let mut flags = Vec::new();
        let mut stats = TurnStats::default();

        let outcome = self.run_stages(&gateway, &config, &mut route, &mut trace, &mut flags, &mut stats);
        let (mut answers, error) = match outcome {
            Ok(a) => (a, None),
            Err(e) => {
                tracing::warn!(stage = ?e.stage, message = %e.message, "turn stage failed");
                (Vec::new(), Some(e))
            }
        };
        self.attach_labels(&config, &mut answers);
        let final_text = self.final_text(&gateway, &config, &trace.standalone_question, &answers, &mut flags);
        let error = match route.finish() {
            Ok(()) => error,
            Err(e) => error.or(Some(e.into())),
        };
        session
            .dialogue
            .push_turn(question, answers.clone())
            .expect("question checked non-empty");

        stats.llm_calls = gateway.calls();
        stats.total_ms = ms(started);
        trace.route = route.path().to_vec();
        trace.error = error.clone();
        let result = TurnResult {
            turn,
            question: question.to_string(),
            standalone_question: trace.standalone_question.clone(),
            question_type: trace.question_type,
            qir: trace.qir.clone(),
            answers,
            final_text,
            degraded: flags,
            error,
            trace_ref: format!("{}/{turn}", session.id),
            stats,
        };
        if let Some(dir) = &config.trace_dir {
            write_trace(dir, &trace);
        }
        session.traces.push(trace);
        session.results.push(result.clone());
        Ok(result)
    }

    fn run_stages(
        &self,
        gateway: &Gateway<'_>,
        config: &EngineConfig,
        route: &mut Route,
        trace: &mut TurnTrace,
        flags: &mut Vec<DegradedFlag>,
        stats: &mut TurnStats,
    ) -> Result<Vec<Answer>, TurnError> {
        let theta = config.theta;
        let mut question = trace.question.clone();
        if config.translation_enabled {
            match translate(gateway, &self.prompts, &question, theta) {
                Some(t) => question = t,
                None => flags.push(DegradedFlag::TranslationFallback),
            }
            trace.translated_question = Some(question.clone());
        }

        let t = Instant::now();
        route.advance(RouteTag::Qir)?;
        if config.system_mode == SystemMode::MultiTurn {
            route.advance(RouteTag::Classifier)?;
            let kind = understanding::classify(gateway, &self.prompts.classify, &question, theta)
                .map_err(|e| TurnError::new(Stage::Understanding, e))?;
            trace.question_type = Some(kind);
            if kind == QuestionType::Dependent {
                route.advance(RouteTag::Rephraser)?;
                let r = understanding::rephrase(gateway, &self.prompts.rephrase, &question, &trace.context, theta);
                if r.fell_back {
                    flags.push(DegradedFlag::RephraseFallback);
                }
                question = r.question;
            }
            route.advance(RouteTag::Qir)?;
        }
        trace.standalone_question = question.clone();
        let qir = understanding::extract_qir(gateway, &self.prompts.extract_triples, &question, theta)
            .map_err(|e| TurnError::new(Stage::Understanding, e))?;
        trace.qir = Some(qir.clone());
        stats.understanding_ms = ms(t);

        let t = Instant::now();
        route.advance(RouteTag::Chat)?;
        route.advance(RouteTag::Query)?;
        route.advance(RouteTag::Matching)?;
        let linker = Linker {
            gateway,
            prompts: &self.prompts,
            target: self.kg.as_ref(),
            embedder: self.embedder.as_ref(),
            config,
        };
        let linked = linker.link(&question, &qir).map_err(|e| TurnError::new(Stage::Linking, e))?;
        trace.entity_links = linked.entities;
        if !linked.maps.unlinked_facts.is_empty() {
            flags.push(DegradedFlag::UnlinkedRelation);
        }
        trace.linking = Some(linked.maps.clone());
        stats.linking_ms = ms(t);

        let t = Instant::now();
        route.advance(RouteTag::Query)?;
        let planner = Planner {
            gateway,
            prompts: &self.prompts,
            target: self.kg.as_ref(),
            config,
        };
        let planned = planner.plan_and_execute(&question, &qir, &linked.maps);
        stats.planning_ms = ms(t);
        let outcome = match planned {
            Ok(o) => o,
            Err(failure) => {
                let PlanFailure { error, trace: plan } = *failure;
                record_plan(stats, &plan);
                trace.plan = Some(plan);
                return Err(TurnError::new(Stage::Planning, error));
            }
        };
        record_plan(stats, &outcome.trace);
        if outcome.trace.filter_fell_back {
            flags.push(DegradedFlag::PredicateFilterFallback);
        }
        if outcome.failed_queries > 0 {
            flags.push(DegradedFlag::QueryFailures);
        }
        trace.plan = Some(outcome.trace);
        route.advance(RouteTag::Chat)?;
        Ok(outcome.answers)
    }

    fn attach_labels(&self, config: &EngineConfig, answers: &mut [Answer]) {
        for a in answers.iter_mut().filter(|a| a.kind == AnswerKind::Entity) {
            match label_of(self.kg.as_ref(), &config.label_predicates, &a.value) {
                Ok(Some(label)) => a.display_label = Some(label),
                Ok(None) => {}
                Err(e) => tracing::debug!(error = %e, iri = %a.value, "label lookup failed"),
            }
        }
    }

    fn final_text(
        &self,
        gateway: &Gateway<'_>,
        config: &EngineConfig,
        question: &str,
        answers: &[Answer],
        flags: &mut Vec<DegradedFlag>,
    ) -> String {
        if answers.is_empty() {
            return NOT_FOUND_TEXT.to_string();
        }
        let plain = render_answers(answers);
        if !config.reformulate {
            return plain;
        }
        let request = LlmRequest::new(self.prompts.reformulate_answer.clone())
            .with("question", question)
            .with("answers", answer_values(answers));
        match retry::bounded(config.theta, |_| rewrite_attempt(gateway, &request)) {
            Ok(text) => text,
            Err(_) => {
                flags.push(DegradedFlag::ReformulationFallback);
                plain
            }
        }
    }
}

fn rewrite_attempt(gateway: &Gateway<'_>, request: &LlmRequest) -> Attempt<String, String> {
    match gateway.complete(request) {
        Err(e @ LlmError::Refused { .. }) => Attempt::Abort(e.to_string()),
        Err(e) => Attempt::Retry(e.to_string()),
        Ok(r) => match clean_rewrite(&r.raw_text) {
            Some(text) => Attempt::Done(text),
            None => Attempt::Retry("empty output".to_string()),
        },
    }
}

/// English rendering of `question`, or `None` when every attempt failed.
fn translate(gateway: &Gateway<'_>, prompts: &PromptLibrary, question: &str, theta: u32) -> Option<String> {
    let request = LlmRequest::new(prompts.translate.clone()).with("question", question);
    retry::bounded(theta, |_| rewrite_attempt(gateway, &request)).ok()
}

/// Deterministic answer text: labels (or values) joined by commas, `Yes`/`No`
/// for booleans.
pub fn render_answers(answers: &[Answer]) -> String {
    if answers.is_empty() {
        return NOT_FOUND_TEXT.to_string();
    }
    if let [a] = answers {
        if a.kind == AnswerKind::Boolean {
            return if a.value == "true" { "Yes." } else { "No." }.to_string();
        }
    }
    answers
        .iter()
        .map(|a| a.display_label.as_deref().unwrap_or(&a.value))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Answer values as handed to the reformulation prompt.
fn answer_values(answers: &[Answer]) -> String {
    answers
        .iter()
        .map(|a| match a.kind {
            AnswerKind::Boolean if a.value == "true" => "yes",
            AnswerKind::Boolean => "no",
            _ => a.display_label.as_deref().unwrap_or(&a.value),
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn record_plan(stats: &mut TurnStats, plan: &PlanTrace) {
    stats.generated_queries = plan.generated;
    stats.candidate_queries = plan.candidates.len();
    stats.executed_queries = plan.executed.len();
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

fn write_trace(dir: &Path, trace: &TurnTrace) {
    let path = dir.join(format!("{}-{:03}.json", trace.session_id, trace.turn));
    let written = std::fs::create_dir_all(dir).and_then(|_| {
        let body = serde_json::to_vec_pretty(trace).map_err(std::io::Error::other)?;
        std::fs::write(&path, body)
    });
    if let Err(e) = written {
        tracing::warn!(path = %path.display(), error = %e, "cannot write turn trace");
    }
}

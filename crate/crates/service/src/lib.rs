//! HTTP session API over the conversational engine.
//!
//! Routes:
//!
//! | method | path | body / reply |
//! |---|---|---|
//! | `POST` | `/sessions` | config overrides → `{session_id, created_at, config}` |
//! | `POST` | `/sessions/{id}/messages` | `{question}` → `TurnResult` |
//! | `GET` | `/sessions/{id}/history` | `[HistoryEntry]` |
//! | `GET` | `/sessions/{id}/trace/{turn}` | `TurnTrace` |
//! | `GET` | `/healthz` | `{status}` |
//!
//! Each session holds its own lock; a second message posted while a turn is
//! running gets `409 Conflict`. Turns run on the blocking pool because the
//! engine's HTTP clients are synchronous.

use std::collections::HashMap;
use std::future::Future;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use kgqa_core::model::Answer;
use kgqa_core::orchestrator::{DegradedFlag, Engine, TurnError, TurnResult, TurnTrace};
use kgqa_core::{EngineConfig, SessionState};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use tokio::net::TcpListener;
use tokio::sync::Mutex;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

/// Config fields a client may override per session. Backend selection and
/// file paths stay server-side.
const OVERRIDABLE: &[&str] = &[
    "theta",
    "context_limit",
    "vertex_limit",
    "query_num",
    "system_mode",
    "translation_enabled",
    "reformulate",
    "predicate_candidate_cap",
];

#[derive(Debug, Clone, Default)]
pub struct ServiceOptions {
    /// Directory for per-session JSON-lines logs; disabled when `None`.
    pub persist_dir: Option<PathBuf>,
    /// Allowed browser origin; any origin when `None`.
    pub cors_origin: Option<String>,
}

pub struct SessionRecord {
    pub session_id: String,
    pub created_at: u64,
    pub config: EngineConfig,
    state: Arc<Mutex<SessionState>>,
}

impl SessionRecord {
    /// Exclusive access to the session, waiting for any running turn.
    pub async fn lock(&self) -> tokio::sync::OwnedMutexGuard<SessionState> {
        self.state.clone().lock_owned().await
    }
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    engine: Engine,
    sessions: RwLock<HashMap<String, Arc<SessionRecord>>>,
    options: ServiceOptions,
}

impl AppState {
    pub fn new(engine: Engine, options: ServiceOptions) -> Self {
        AppState {
            inner: Arc::new(Inner {
                engine,
                sessions: RwLock::new(HashMap::new()),
                options,
            }),
        }
    }

    pub fn session(&self, id: &str) -> Option<Arc<SessionRecord>> {
        self.inner.sessions.read().get(id).cloned()
    }

    pub fn session_count(&self) -> usize {
        self.inner.sessions.read().len()
    }
}

/// One row of `GET /history`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub turn: usize,
    pub question: String,
    pub standalone_question: String,
    pub answers: Vec<Answer>,
    pub final_text: String,
    pub degraded: Vec<DegradedFlag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<TurnError>,
}

impl From<&TurnResult> for HistoryEntry {
    fn from(r: &TurnResult) -> Self {
        HistoryEntry {
            turn: r.turn,
            question: r.question.clone(),
            standalone_question: r.standalone_question.clone(),
            answers: r.answers.clone(),
            final_text: r.final_text.clone(),
            degraded: r.degraded.clone(),
            error: r.error.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub created_at: u64,
    pub config: EngineConfig,
}

#[derive(Debug, Deserialize)]
pub struct PostMessage {
    pub question: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn no_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown session {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.message}))).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    let cors = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    let cors = match state.inner.options.cors_origin.as_deref().map(HeaderValue::from_str) {
        Some(Ok(origin)) => cors.allow_origin(AllowOrigin::exact(origin)),
        Some(Err(_)) => {
            tracing::warn!("ignoring unparsable CORS origin; allowing any");
            cors.allow_origin(Any)
        }
        None => cors.allow_origin(Any),
    };
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/:id/messages", post(post_message))
        .route("/sessions/:id/history", get(history))
        .route("/sessions/:id/trace/:turn", get(trace))
        .layer(cors)
        .with_state(state)
}

/// Serves until `shutdown` resolves, then lets in-flight turns finish.
pub async fn serve(listener: TcpListener, state: AppState, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutdown requested; draining in-flight turns");
}

async fn healthz(State(state): State<AppState>) -> Json<Value> {
    Json(json!({"status": "ok", "sessions": state.session_count()}))
}

/// Merges `overrides` into `base`. `mode` is accepted as an alias of
/// `system_mode`.
pub fn apply_overrides(base: &EngineConfig, overrides: &Map<String, Value>) -> Result<EngineConfig, String> {
    let mut doc = serde_json::to_value(base).map_err(|e| e.to_string())?;
    let fields = doc.as_object_mut().expect("config serializes to an object");
    for (key, value) in overrides {
        let key = if key == "mode" { "system_mode" } else { key.as_str() };
        if !OVERRIDABLE.contains(&key) {
            return Err(format!("field {key:?} cannot be overridden"));
        }
        fields.insert(key.to_string(), value.clone());
    }
    let config: EngineConfig = serde_json::from_value(doc).map_err(|e| e.to_string())?;
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

async fn create_session(
    State(state): State<AppState>,
    body: Bytes,
) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    // An empty body means no overrides.
    let overrides: Map<String, Value> = if body.iter().all(u8::is_ascii_whitespace) {
        Map::new()
    } else {
        serde_json::from_slice(&body)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("overrides must be a JSON object: {e}")))?
    };
    let config = apply_overrides(state.inner.engine.config(), &overrides)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e))?;
    let session = SessionState::new(config.clone());
    let record = Arc::new(SessionRecord {
        session_id: session.id.clone(),
        created_at: now_secs(),
        config,
        state: Arc::new(Mutex::new(session)),
    });
    let created = SessionCreated {
        session_id: record.session_id.clone(),
        created_at: record.created_at,
        config: record.config.clone(),
    };
    if let Some(dir) = &state.inner.options.persist_dir {
        let line = json!({"event": "created", "session": &created});
        let dir = dir.clone();
        let id = created.session_id.clone();
        tokio::task::spawn_blocking(move || append_line(&dir, &id, &line))
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("persisting session: {e}")))?;
    }
    state.inner.sessions.write().insert(record.session_id.clone(), record);
    tracing::info!(session = %created.session_id, "session created");
    Ok((StatusCode::CREATED, Json(created)))
}

fn append_line(dir: &std::path::Path, session_id: &str, line: &Value) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join(format!("{session_id}.jsonl")))?;
    writeln!(file, "{line}")
}

async fn post_message(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<PostMessage>,
) -> Result<Json<TurnResult>, ApiError> {
    let record = state.session(&id).ok_or_else(|| ApiError::no_session(&id))?;
    let mut guard = record
        .state
        .clone()
        .try_lock_owned()
        .map_err(|_| ApiError::new(StatusCode::CONFLICT, "a turn is already in progress for this session"))?;
    let worker = state.clone();
    let result = tokio::task::spawn_blocking(move || {
        let result = worker.inner.engine.process_turn(&mut guard, &body.question)?;
        if let Some(dir) = &worker.inner.options.persist_dir {
            let line = json!({"event": "turn", "result": &result});
            if let Err(e) = append_line(dir, &guard.id, &line) {
                tracing::error!(session = %guard.id, error = %e, "failed to persist turn");
            }
        }
        Ok::<_, kgqa_core::orchestrator::TurnRejected>(result)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    Ok(Json(result))
}

async fn history(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Vec<HistoryEntry>>, ApiError> {
    let record = state.session(&id).ok_or_else(|| ApiError::no_session(&id))?;
    let session = record.lock().await;
    Ok(Json(session.results.iter().map(HistoryEntry::from).collect()))
}

async fn trace(
    State(state): State<AppState>,
    Path((id, turn)): Path<(String, usize)>,
) -> Result<Json<TurnTrace>, ApiError> {
    let record = state.session(&id).ok_or_else(|| ApiError::no_session(&id))?;
    let session = record.lock().await;
    session
        .trace(turn)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("session {id} has no turn {turn}")))
}

//! HTTP surface for chat bots and orchestrators.
//!
//! Each session is guarded by its own async mutex, so requests for one
//! session run one at a time while different sessions proceed in
//! parallel. With a log directory every accepted command and task change
//! is appended to `<id>.jsonl`, next to a `<id>.meta.json` holding the
//! session's creation parameters.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::llm::BackendKind;
use crate::matcher::{InterventionType, SqlEvent};
use crate::pipeline::{Pipeline, TriggerOutcome};
use crate::reflection::Reflection;
use crate::scheduler::{DrainMode, SchedulerConfig, SchedulerError};
use crate::session::{self, LoadError, LogError, LogRecord, SessionError, SessionState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: String,
    pub group_id: String,
    pub scheduler: SchedulerConfig,
    /// Wall-clock creation time, seconds since the Unix epoch.
    pub created_unix: f64,
}

pub struct ApiSession {
    pub meta: SessionMeta,
    pub state: SessionState,
}

type Clock = Arc<dyn Fn() -> f64 + Send + Sync>;

pub struct AppState {
    pipeline: Pipeline,
    defaults: SchedulerConfig,
    log_dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Mutex<ApiSession>>>>,
    counter: AtomicU64,
    clock: Clock,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Lowercase, URL-safe form of a group id.
pub fn slug(group_id: &str) -> String {
    let mut out = String::new();
    for c in group_id.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    let out: String = out.trim_matches('-').chars().take(32).collect();
    if out.is_empty() {
        "session".into()
    } else {
        out.trim_end_matches('-').to_string()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RestoreError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad session metadata: {message}")]
    Meta { path: String, message: String },
    #[error("{path}: {source}")]
    Load {
        path: String,
        #[source]
        source: LoadError,
    },
}

impl AppState {
    pub fn new(pipeline: Pipeline, defaults: SchedulerConfig, log_dir: Option<PathBuf>) -> Self {
        AppState {
            pipeline,
            defaults,
            log_dir,
            sessions: RwLock::new(HashMap::new()),
            counter: AtomicU64::new(0),
            clock: Arc::new(unix_now),
        }
    }

    /// Replace the wall clock, e.g. with a fixed value in tests.
    pub fn with_clock(mut self, clock: impl Fn() -> f64 + Send + Sync + 'static) -> Self {
        self.clock = Arc::new(clock);
        self
    }

    pub fn backend(&self) -> BackendKind {
        self.pipeline.gateway.kind()
    }

    pub fn session(&self, id: &str) -> Option<Arc<Mutex<ApiSession>>> {
        self.sessions.read().expect("session map poisoned").get(id).cloned()
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("session map poisoned").keys().cloned().collect();
        ids.sort();
        ids
    }

    fn log_path(&self, id: &str) -> Option<PathBuf> {
        self.log_dir.as_ref().map(|d| d.join(format!("{id}.jsonl")))
    }

    fn meta_path(dir: &Path, id: &str) -> PathBuf {
        dir.join(format!("{id}.meta.json"))
    }

    fn persist(&self, id: &str, record: &LogRecord) -> Result<(), LogError> {
        match self.log_path(id) {
            Some(path) => session::persist_event(&path, record),
            None => Ok(()),
        }
    }

    /// Rebuild every session found in the log directory by running its
    /// log back through the pipeline.
    pub async fn restore(&self) -> Result<usize, RestoreError> {
        let Some(dir) = self.log_dir.clone() else {
            return Ok(0);
        };
        let io = |path: &Path, source| RestoreError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut metas = Vec::new();
        for entry in std::fs::read_dir(&dir).map_err(|e| io(&dir, e))? {
            let path = entry.map_err(|e| io(&dir, e))?.path();
            if path.to_string_lossy().ends_with(".meta.json") {
                metas.push(path);
            }
        }
        metas.sort();
        let mut restored = 0;
        for meta_path in metas {
            let text = std::fs::read_to_string(&meta_path).map_err(|e| io(&meta_path, e))?;
            let meta: SessionMeta = serde_json::from_str(&text).map_err(|e| RestoreError::Meta {
                path: meta_path.display().to_string(),
                message: e.to_string(),
            })?;
            let log_path = dir.join(format!("{}.jsonl", meta.session_id));
            let records = if log_path.exists() {
                session::read_log(&log_path).map_err(|e| RestoreError::Load {
                    path: log_path.display().to_string(),
                    source: e.into(),
                })?
            } else {
                vec![]
            };
            let state = self
                .pipeline
                .rebuild(&meta.session_id, &records, meta.scheduler)
                .await
                .map_err(|source| RestoreError::Load {
                    path: log_path.display().to_string(),
                    source,
                })?;
            if let Some(n) = meta.session_id.rsplit('-').next().and_then(|n| n.parse::<u64>().ok()) {
                self.counter.fetch_max(n, Ordering::SeqCst);
            }
            let id = meta.session_id.clone();
            self.sessions
                .write()
                .expect("session map poisoned")
                .insert(id, Arc::new(Mutex::new(ApiSession { meta, state })));
            restored += 1;
        }
        Ok(restored)
    }

    /// Timer drain: release due queue heads in every session.
    pub async fn tick_all(&self) -> usize {
        let sessions: Vec<_> = self.sessions.read().expect("session map poisoned").values().cloned().collect();
        let mut released = 0;
        for s in sessions {
            let mut s = s.lock().await;
            let now = ((self.clock)() - s.meta.created_unix).max(s.state.last_ts());
            if s.state.tick(now).is_some() {
                released += 1;
            }
        }
        released
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
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

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, format!("unknown session `{id}`"))
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match e {
            SessionError::Scheduler(SchedulerError::TaskRegression { .. }) => StatusCode::CONFLICT,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub group_id: String,
    pub task_id: Option<u8>,
    pub tau_s: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub group_id: String,
    pub task_id: u8,
    pub tau_s: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitCommand {
    pub sql: String,
    pub author: Option<String>,
    pub ts: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct CommandResponse {
    pub ts: f64,
    pub classification: Option<InterventionType>,
    pub decision: &'static str,
    pub reflection: Option<Reflection>,
    pub triggers: Vec<TriggerOutcome>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvanceTask {
    pub task_id: u8,
    pub ts: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TaskResponse {
    pub task_id: u8,
    pub flushed: Vec<Reflection>,
}

#[derive(Debug, Deserialize)]
pub struct SinceQuery {
    pub since_ts: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub backend: BackendKind,
}

type Shared = State<Arc<AppState>>;

fn check_ts(ts: Option<f64>) -> Result<(), ApiError> {
    match ts {
        Some(t) if !t.is_finite() || t < 0.0 => Err(ApiError::bad_request(format!("ts must be a non-negative number, got {t}"))),
        _ => Ok(()),
    }
}

async fn create_session(
    State(app): Shared,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<CreatedSession>), ApiError> {
    let Json(req) = body?;
    if req.group_id.trim().is_empty() {
        return Err(ApiError::bad_request("group_id must not be empty"));
    }
    let mut scheduler = app.defaults;
    if let Some(tau) = req.tau_s {
        if !tau.is_finite() || tau < 0.0 {
            return Err(ApiError::bad_request(format!("tau_s must be >= 0, got {tau}")));
        }
        scheduler.tau_s = tau;
    }
    let task_id = req.task_id.unwrap_or(1);
    if !(1..=3).contains(&task_id) {
        return Err(ApiError::bad_request(format!("task_id must be 1, 2 or 3, got {task_id}")));
    }
    let n = app.counter.fetch_add(1, Ordering::SeqCst) + 1;
    let id = format!("{}-{n:04}", slug(&req.group_id));
    let mut state = SessionState::new(id.clone(), scheduler)?;
    let meta = SessionMeta {
        session_id: id.clone(),
        group_id: req.group_id.clone(),
        scheduler,
        created_unix: (app.clock)(),
    };
    if let Some(dir) = &app.log_dir {
        let text = serde_json::to_string_pretty(&meta).map_err(|e| ApiError::internal(e.to_string()))?;
        std::fs::write(AppState::meta_path(dir, &id), text).map_err(|e| ApiError::internal(e.to_string()))?;
    }
    if task_id > 1 {
        state.advance_task(task_id, 0.0)?;
        app.persist(&id, &LogRecord::task_advance(&id, task_id, 0.0))
            .map_err(|e| ApiError::internal(e.to_string()))?;
    }
    tracing::info!(session = %id, group = %req.group_id, tau_s = scheduler.tau_s, "session created");
    app.sessions
        .write()
        .expect("session map poisoned")
        .insert(id.clone(), Arc::new(Mutex::new(ApiSession { meta, state })));
    Ok((
        StatusCode::CREATED,
        Json(CreatedSession {
            session_id: id,
            group_id: req.group_id,
            task_id,
            tau_s: scheduler.tau_s,
        }),
    ))
}

async fn submit_command(
    State(app): Shared,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<SubmitCommand>, JsonRejection>,
) -> Result<Json<CommandResponse>, ApiError> {
    let session = app.session(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let Json(req) = body?;
    check_ts(req.ts)?;
    if req.sql.trim().is_empty() {
        return Err(SessionError::EmptySql.into());
    }
    let mut s = session.lock().await;
    let ts = req.ts.unwrap_or_else(|| ((app.clock)() - s.meta.created_unix).max(s.state.last_ts()));
    let ev = SqlEvent {
        session_id: id.clone(),
        task_id: s.state.task_id(),
        author: req.author,
        timestamp: ts,
        raw_sql: req.sql,
    };
    let record = LogRecord::command(&ev);
    let outcome = app.pipeline.submit(&mut s.state, ev).await?;
    app.persist(&id, &record).map_err(|e| ApiError::internal(e.to_string()))?;
    let reflection = outcome.shown().next().cloned();
    Ok(Json(CommandResponse {
        ts,
        classification: outcome.classification(),
        decision: outcome.decision(),
        reflection,
        triggers: outcome.triggers,
    }))
}

async fn list_reflections(
    State(app): Shared,
    UrlPath(id): UrlPath<String>,
    query: Result<Query<SinceQuery>, QueryRejection>,
) -> Result<Json<Vec<Reflection>>, ApiError> {
    let session = app.session(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let Query(q) = query?;
    let since = q.since_ts.unwrap_or(f64::NEG_INFINITY);
    let s = session.lock().await;
    Ok(Json(s.state.delivered_since(since).cloned().collect()))
}

async fn advance_task(
    State(app): Shared,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<AdvanceTask>, JsonRejection>,
) -> Result<Json<TaskResponse>, ApiError> {
    let session = app.session(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let Json(req) = body?;
    check_ts(req.ts)?;
    let mut s = session.lock().await;
    let ts = req.ts.unwrap_or_else(|| ((app.clock)() - s.meta.created_unix).max(s.state.last_ts()));
    let changed = req.task_id != s.state.task_id();
    let flushed = s.state.advance_task(req.task_id, ts)?;
    if changed {
        app.persist(&id, &LogRecord::task_advance(&id, req.task_id, ts))
            .map_err(|e| ApiError::internal(e.to_string()))?;
    }
    Ok(Json(TaskResponse {
        task_id: s.state.task_id(),
        flushed,
    }))
}

async fn healthz(State(app): Shared) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        backend: app.backend(),
    })
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}/commands", post(submit_command))
        .route("/v1/sessions/{id}/reflections", get(list_reflections))
        .route("/v1/sessions/{id}/task", post(advance_task))
        .with_state(app)
}

/// Serve until Ctrl-C. Starts the tick loop when the timer drain is set.
pub async fn serve(app: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    if let DrainMode::Timer { interval_s } = app.defaults.drain {
        let ticker = Arc::clone(&app);
        tokio::spawn(async move {
            let mut every = tokio::time::interval(Duration::from_secs_f64(interval_s.max(0.01)));
            loop {
                every.tick().await;
                let n = ticker.tick_all().await;
                if n > 0 {
                    tracing::debug!(released = n, "timer drain");
                }
            }
        });
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, backend = %app.backend(), "listening");
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

//! HTTP API used by the console UI.
//!
//! | Method | Path                     | Body                                   |
//! |--------|--------------------------|----------------------------------------|
//! | GET    | /healthz                 |                                        |
//! | POST   | /sessions                |                                        |
//! | GET    | /sessions/{id}/state     |                                        |
//! | POST   | /sessions/{id}/command   | `{"text": "..."}` or `{"absent": true}` |
//! | POST   | /sessions/{id}/reset     |                                        |
//! | DELETE | /sessions/{id}           |                                        |
//!
//! Errors are `{"error": "..."}` with 404 for unknown sessions, 422 for
//! malformed bodies and 503 when the language model is unavailable.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use visa_core::orchestrator::engine::Resources;
use visa_core::stages::{Transcript, TranscriptOrigin};

use crate::session::{BoxedBackend, Session};

/// Creates one backend per session.
pub type BackendFactory = Arc<dyn Fn() -> anyhow::Result<BoxedBackend> + Send + Sync>;

#[derive(Clone)]
pub struct AppState {
    sessions: Arc<Mutex<HashMap<String, Arc<Mutex<Session>>>>>,
    next_id: Arc<AtomicU64>,
    factory: BackendFactory,
    resources: Arc<Resources>,
    ic_max: u32,
}

impl AppState {
    pub fn new(factory: BackendFactory, resources: Resources, ic_max: u32) -> Self {
        Self {
            sessions: Arc::default(),
            next_id: Arc::new(AtomicU64::new(1)),
            factory,
            resources: Arc::new(resources),
            ic_max,
        }
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        lock(&self.sessions).get(id).cloned().ok_or_else(|| ApiError::not_found(id))
    }
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown session {id:?}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.message}))).into_response()
    }
}

/// Body of `POST /sessions/{id}/command`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CommandBody {
    #[serde(default)]
    text: Option<String>,
    /// The clip contained no speech.
    #[serde(default)]
    absent: bool,
    #[serde(default)]
    speaker: Option<String>,
}

fn parse_command(body: &[u8]) -> Result<Transcript, ApiError> {
    let unprocessable = |m: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m);
    let b: CommandBody = serde_json::from_slice(body).map_err(|e| unprocessable(format!("invalid command body: {e}")))?;
    let mut t = match (b.text, b.absent) {
        (Some(text), false) => Transcript::spoken(text, TranscriptOrigin::Http),
        (None, true) => Transcript::silent(TranscriptOrigin::Http),
        _ => return Err(unprocessable("give exactly one of \"text\" or \"absent\": true".into())),
    };
    t.speaker = b.speaker;
    Ok(t)
}

async fn healthz() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

async fn create_session(State(app): State<AppState>) -> Result<(StatusCode, Json<Value>), ApiError> {
    let backend = (app.factory)().map_err(|e| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, format!("{e:#}")))?;
    let id = format!("s{}", app.next_id.fetch_add(1, Ordering::Relaxed));
    let session = Session::new(id.clone(), backend, app.resources.clone(), app.ic_max);
    lock(&app.sessions).insert(id.clone(), Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(json!({"id": id}))))
}

async fn delete_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    lock(&app.sessions).remove(&id).map(|_| StatusCode::NO_CONTENT).ok_or_else(|| ApiError::not_found(&id))
}

async fn session_state(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let session = app.session(&id)?;
    let s = lock(&session);
    Ok(Json(serde_json::to_value(s.view()).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?))
}

async fn reset_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let session = app.session(&id)?;
    let mut s = lock(&session);
    s.reset();
    Ok(Json(json!({"id": id, "clip": s.state.clip.index})))
}

async fn submit_command(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let session = app.session(&id)?;
    let transcript = parse_command(&body)?;
    // The engine blocks on model calls; keep it off the async workers.
    let result = tokio::task::spawn_blocking(move || {
        let mut s = lock(&session);
        s.submit(transcript).map(serde_json::to_value)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    match result {
        Ok(Ok(v)) => Ok(Json(v)),
        Ok(Err(e)) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
        Err(e) => Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, e.to_string())),
    }
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", axum::routing::delete(delete_session))
        .route("/sessions/{id}/state", get(session_state))
        .route("/sessions/{id}/command", post(submit_command))
        .route("/sessions/{id}/reset", post(reset_session))
        .with_state(app)
}

pub async fn serve(addr: SocketAddr, app: AppState) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(app)).await?;
    Ok(())
}

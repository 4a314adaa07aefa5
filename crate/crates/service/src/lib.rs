//! HTTP session API: a human answers queries one at a time and each answer
//! immediately updates the belief that picks the next query.
//!
//! Sessions live in memory. Each one sits behind its own async mutex, so
//! query selection and belief updates for a session never interleave while
//! other sessions proceed; the sampling work itself runs on the blocking
//! pool.

mod error;

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use preflearn::acquisition::AcquisitionKind;
use preflearn::domain::{QueryKind, Response};
use preflearn::session::{ActiveSession, BeliefSummary, QueryPayload, SessionConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Mutex;
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;
use uuid::Uuid;

pub use error::ApiError;

type Shared = Arc<Mutex<ActiveSession>>;

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Shared>>>,
    log_dir: Option<PathBuf>,
}

impl AppState {
    /// With `log_dir`, every session appends its events to `<dir>/<id>.jsonl`.
    pub fn new(log_dir: Option<PathBuf>) -> Self {
        AppState {
            sessions: Arc::default(),
            log_dir,
        }
    }

    fn session(&self, id: &str) -> Result<Shared, ApiError> {
        self.sessions
            .read()
            .expect("session registry poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    fn log(&self, id: &str, event: serde_json::Value) -> Result<(), ApiError> {
        let Some(dir) = &self.log_dir else {
            return Ok(());
        };
        append_line(&dir.join(format!("{id}.jsonl")), &event).map_err(|e| ApiError::internal(format!("event log: {e}")))
    }
}

fn append_line(path: &Path, value: &serde_json::Value) -> std::io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{value}")
}

/// The API routes, plus a static file fallback when `static_dir` is given.
pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/query", get(get_query))
        .route("/sessions/{id}/response", post(post_response))
        .route("/sessions/{id}/belief", get(get_belief))
        .with_state(state)
        .layer(CorsLayer::permissive());
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Creates the log directory when one is configured.
pub fn prepare_log_dir(dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub id: String,
    /// Feature dimension.
    pub d: usize,
    pub strategy: AcquisitionKind,
    pub query_kind: QueryKind,
    pub query_size: usize,
    pub num_trajectories: usize,
    /// Normalized mean of the initial belief.
    pub mean: Option<Vec<f64>>,
}

/// A response plus, optionally, the id of the query it answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseBody {
    #[serde(default)]
    pub query_id: Option<u64>,
    #[serde(flatten)]
    pub response: Response,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Updated {
    pub iteration: usize,
    pub evidence_count: usize,
    pub mean: Option<Vec<f64>>,
    /// Present when the session config carried true weights.
    pub cosine: Option<f64>,
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<Json<CreatedSession>, ApiError> {
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::bad_request(format!("body is not UTF-8: {e}")))?;
    let config = SessionConfig::from_json(text).map_err(ApiError::config)?;
    let session = blocking(move || ActiveSession::new(config).map_err(ApiError::config)).await?;
    let id = Uuid::new_v4().to_string();
    let summary = session.summary().map_err(ApiError::from_core)?;
    let cfg = session.config();
    let created = CreatedSession {
        id: id.clone(),
        d: session.set().dim(),
        strategy: cfg.strategy,
        query_kind: cfg.optimizer.query_kind,
        query_size: cfg.optimizer.query_size,
        num_trajectories: session.set().len(),
        mean: summary.mean,
    };
    state.log(&id, json!({"event": "created", "config": cfg}))?;
    state
        .sessions
        .write()
        .expect("session registry poisoned")
        .insert(id, Arc::new(Mutex::new(session)));
    Ok(Json(created))
}

async fn get_query(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<QueryPayload>, ApiError> {
    let mut session = state.session(&id)?.lock_owned().await;
    let payload = blocking(move || {
        let was_pending = session.pending().is_some();
        let pending = session.next_query().map_err(ApiError::from_core)?;
        if !was_pending {
            state.log(
                &id,
                json!({"event": "query", "query_id": pending.query_id, "query": pending.query}),
            )?;
        }
        session.payload(&pending).map_err(ApiError::from_core)
    })
    .await?;
    Ok(Json(payload))
}

async fn post_response(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<Updated>, ApiError> {
    let shared = state.session(&id)?;
    let body: ResponseBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::unprocessable(format!("malformed response: {e}")))?;
    let mut session = shared.lock_owned().await;
    let updated = blocking(move || {
        let answered = session.pending().map(|p| p.query_id);
        session
            .answer(body.query_id, &body.response)
            .map_err(ApiError::from_answer)?;
        let summary = session.summary().map_err(ApiError::from_core)?;
        state.log(
            &id,
            json!({
                "event": "response",
                "query_id": answered,
                "response": body.response,
                "iteration": summary.iteration,
            }),
        )?;
        Ok(Updated {
            iteration: summary.iteration,
            evidence_count: summary.evidence_count,
            mean: summary.mean,
            cosine: summary.cosine,
        })
    })
    .await?;
    Ok(Json(updated))
}

async fn get_belief(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<BeliefSummary>, ApiError> {
    let session = state.session(&id)?.lock_owned().await;
    let summary = blocking(move || session.summary().map_err(ApiError::from_core)).await?;
    Ok(Json(summary))
}

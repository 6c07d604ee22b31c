//! HTTP service that lets a person play the point-cloud labeling game:
//! each round they label scatterplots as `X` or `O`, the server refits the
//! proxy and retrains the projection, then serves the next round.
//!
//! Routes, all JSON:
//! - `POST /sessions` takes [`CreateSession`], returns [`CreatedSession`] (201)
//! - `GET /sessions/{id}/round` returns [`RoundPayload`]
//! - `POST /sessions/{id}/labels` takes [`SubmitLabels`], returns [`SubmitResult`]
//! - `GET /sessions/{id}/metrics` returns [`MetricsPayload`]
//!
//! Errors carry an [`ErrorBody`]: 400 for invalid input, 404 for unknown
//! sessions, 409 when a submission is already training or nothing is pending.

mod api;
mod store;

use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mom_core::pointcloud::{Label, PointcloudConfig, PointcloudData, PointcloudSession};
use mom_core::Error as CoreError;
use tokio::sync::Mutex as AsyncMutex;
use uuid::Uuid;

pub use api::{
    default_config, merge, CreateSession, CreatedSession, ErrorBody, Feedback, LabelEntry,
    MetricsPayload, QueryPayload, RoundPayload, RoundStatus, RoundSummary, SessionRecord,
    SubmitLabels, SubmitResult,
};
pub use store::Store;

pub const EXPERIMENT: &str = "pointcloud";
pub const DATA_DIR_ENV: &str = "MOM_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "mom-data";

/// `flag`, else `$MOM_DATA_DIR`, else `./mom-data`.
pub fn resolve_data_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: error.into(),
                ids: Vec::new(),
            },
        }
    }

    fn bad_request(error: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, error)
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no session {id:?}"))
    }

    fn with_ids(mut self, ids: Vec<String>) -> Self {
        self.body.ids = ids;
        self
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::UnknownQuery(ids)
            | CoreError::DuplicateQuery(ids)
            | CoreError::MissingQuery(ids) => Self::bad_request(msg).with_ids(ids),
            CoreError::InvalidResponse { id, .. } => Self::bad_request(msg).with_ids(vec![id]),
            CoreError::Config(_) | CoreError::TooManyQueries { .. } => Self::bad_request(msg),
            CoreError::NoPendingQueries => Self::new(StatusCode::CONFLICT, msg),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, msg),
        }
    }
}

impl From<io::Error> for ApiError {
    fn from(e: io::Error) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// A loaded session with its regenerated dataset.
struct Live {
    record: SessionRecord,
    data: Arc<PointcloudData>,
}

/// Shared server state: the store plus one lock per loaded session.
#[derive(Clone)]
pub struct AppState {
    store: Store,
    sessions: Arc<Mutex<HashMap<String, Arc<AsyncMutex<Live>>>>>,
}

impl AppState {
    pub fn new(store: Store) -> Self {
        Self {
            store,
            sessions: Arc::default(),
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// The session's lock, loading its document from disk on first use.
    async fn live(&self, id: &str) -> ApiResult<Arc<AsyncMutex<Live>>> {
        if Uuid::parse_str(id).is_err() {
            return Err(ApiError::not_found(id));
        }
        if let Some(l) = self.sessions.lock().expect("session map").get(id) {
            return Ok(l.clone());
        }
        let store = self.store.clone();
        let owned = id.to_string();
        let loaded = tokio::task::spawn_blocking(move || -> ApiResult<Option<Live>> {
            let Some(record) = store.load(&owned)? else {
                return Ok(None);
            };
            let data = PointcloudData::build(&record.state.config)?;
            Ok(Some(Live {
                record,
                data: Arc::new(data),
            }))
        })
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
        let live = loaded.ok_or_else(|| ApiError::not_found(id))?;
        Ok(self
            .sessions
            .lock()
            .expect("session map")
            .entry(id.to_string())
            .or_insert_with(|| Arc::new(AsyncMutex::new(live)))
            .clone())
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/round", get(get_round))
        .route("/sessions/{id}/labels", post(submit_labels))
        .route("/sessions/{id}/metrics", get(get_metrics))
        .with_state(state)
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(addr: SocketAddr, data_dir: PathBuf) -> io::Result<()> {
    let store = Store::open(&data_dir)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    println!(
        "listening on http://{}, sessions in {}",
        listener.local_addr()?,
        data_dir.display()
    );
    axum::serve(listener, router(AppState::new(store))).await
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

/// Resolves the configuration of a creation request.
pub fn resolve_config(req: &CreateSession) -> ApiResult<PointcloudConfig> {
    if req.experiment != EXPERIMENT {
        return Err(ApiError::bad_request(format!(
            "unknown experiment {:?}; only {EXPERIMENT:?} is served",
            req.experiment
        )));
    }
    let mut value = serde_json::to_value(default_config())
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    merge(&mut value, req.config.clone());
    let config: PointcloudConfig = serde_json::from_value(value)
        .map_err(|e| ApiError::bad_request(format!("invalid config: {e}")))?;
    config.validate()?;
    Ok(config)
}

async fn create_session(
    State(state): State<AppState>,
    Json(req): Json<CreateSession>,
) -> ApiResult<(StatusCode, Json<CreatedSession>)> {
    let config = resolve_config(&req)?;
    let id = Uuid::new_v4().to_string();
    let store = state.store.clone();
    let record_id = id.clone();
    let live = blocking(move || {
        let data = PointcloudData::build(&config)?;
        let session = PointcloudSession::new(config, &data, req.seed)?;
        let now = now_ms();
        let record = SessionRecord {
            id: record_id,
            experiment: req.experiment,
            seed: req.seed,
            feedback: req.feedback,
            created_ms: now,
            updated_ms: now,
            state: session,
        };
        store.save(&record)?;
        Ok(Live {
            record,
            data: Arc::new(data),
        })
    })
    .await?;
    let created = CreatedSession {
        session_id: id.clone(),
        round: live.record.state.round(),
        rounds: live.record.state.config.mom.rounds,
        queries_per_round: live.record.state.config.mom.queries_per_round,
    };
    state
        .sessions
        .lock()
        .expect("session map")
        .insert(id, Arc::new(AsyncMutex::new(live)));
    Ok((StatusCode::CREATED, Json(created)))
}

async fn get_round(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<RoundPayload>> {
    let live = state.live(&id).await?;
    let mut live = live.lock().await;
    if live.record.state.finished() {
        return Ok(Json(RoundPayload {
            session_id: id,
            round: live.record.state.round(),
            status: RoundStatus::Complete,
            queries: Vec::new(),
        }));
    }
    let issued = live.record.state.session.pending.is_none();
    let mut next = live.record.clone();
    let queries = next.state.queries(&live.data)?;
    if issued {
        next.updated_ms = now_ms();
        state.store.save(&next)?;
        live.record = next;
    }
    Ok(Json(RoundPayload {
        session_id: id,
        round: live.record.state.round(),
        status: RoundStatus::Active,
        queries: queries
            .into_iter()
            .map(|q| QueryPayload {
                query_id: q.id,
                points2d: q.points,
            })
            .collect(),
    }))
}

fn parse_labels(req: &SubmitLabels) -> ApiResult<Vec<(String, Label)>> {
    let mut bad = Vec::new();
    let mut out = Vec::with_capacity(req.labels.len());
    for e in &req.labels {
        match e.label.parse::<Label>() {
            Ok(l) => out.push((e.query_id.clone(), l)),
            Err(_) => bad.push(e.query_id.clone()),
        }
    }
    if bad.is_empty() {
        Ok(out)
    } else {
        Err(ApiError::bad_request("labels must be \"X\" or \"O\"").with_ids(bad))
    }
}

async fn submit_labels(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<SubmitLabels>,
) -> ApiResult<Json<SubmitResult>> {
    let live = state.live(&id).await?;
    let mut guard = live
        .try_lock_owned()
        .map_err(|_| ApiError::new(StatusCode::CONFLICT, "session is busy training"))?;
    if guard.record.state.finished() {
        return Err(ApiError::new(StatusCode::CONFLICT, "session is complete"));
    }
    let labels = parse_labels(&req)?;
    let store = state.store.clone();
    let result = blocking(move || {
        let data = guard.data.clone();
        let mut next = guard.record.clone();
        let truth: HashMap<String, Label> = next
            .state
            .session
            .pending
            .as_ref()
            .map(|b| {
                b.queries
                    .iter()
                    .map(|q| (q.id.clone(), Label::from_target(data.train.labels[q.index])))
                    .collect()
            })
            .unwrap_or_default();
        let m = next.state.submit(&data, &labels)?;
        next.updated_ms = now_ms();
        store.save(&next)?;
        let feedback = next.feedback.then(|| {
            labels
                .iter()
                .map(|(q, l)| Feedback {
                    query_id: q.clone(),
                    label: l.to_string(),
                    truth: truth[q].to_string(),
                    correct: truth[q] == *l,
                })
                .collect()
        });
        let result = SubmitResult {
            summary: RoundSummary {
                round: m.round,
                human_accuracy: m.response_accuracy,
                proxy_validation_error: m.proxy_validation_error,
                embedding_updated: m.embedding_updated,
            },
            next_round: next.state.round(),
            complete: next.state.finished(),
            feedback,
        };
        guard.record = next;
        Ok(result)
    })
    .await?;
    Ok(Json(result))
}

async fn get_metrics(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<MetricsPayload>> {
    let live = state.live(&id).await?;
    let live = live.lock().await;
    let r = &live.record;
    Ok(Json(MetricsPayload {
        session_id: id,
        experiment: r.experiment.clone(),
        round: r.state.round(),
        complete: r.state.finished(),
        trace: r.trace(),
        seed: r.seed,
        feedback: r.feedback,
        config: r.state.config.clone(),
    }))
}

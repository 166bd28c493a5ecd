//! REST interface over a corpus store.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use fingerlab::corpus::{FingeringTrack, ReviewStage, ReviewStatus, Timestamp, TrackKind};
use fingerlab::geometry::PoseFrame;

use crate::edits::EditOp;
use crate::error::ServiceError;
use crate::jobs::{JobKind, JobRecord, JobRegistry};
use crate::store::{BackupBlob, BackupReceipt, CorpusStore, PieceSummary, RestoreReport};

pub const CORPUS_ENV: &str = "FINGERLAB_CORPUS";

/// Corpus directory: the environment variable wins over `fallback`.
pub fn corpus_dir(fallback: impl Into<PathBuf>) -> PathBuf {
    match std::env::var_os(CORPUS_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => fallback.into(),
    }
}

impl ServiceError {
    pub fn status_code(&self) -> StatusCode {
        use fingerlab::Error as E;
        match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Collision { .. } | ServiceError::VersionConflict { .. } => StatusCode::CONFLICT,
            ServiceError::Prerequisite(_) => StatusCode::CONFLICT,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Log { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            ServiceError::Core(E::Io { .. }) => StatusCode::INTERNAL_SERVER_ERROR,
            ServiceError::Core(_) => StatusCode::UNPROCESSABLE_ENTITY,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let code = self.status_code();
        (code, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ServiceError>;

#[derive(Clone)]
pub struct AppState {
    pub jobs: Arc<JobRegistry>,
}

impl AppState {
    pub fn new(store: CorpusStore) -> Self {
        AppState {
            jobs: Arc::new(JobRegistry::new(Arc::new(store))),
        }
    }

    fn store(&self) -> &CorpusStore {
        self.jobs.store()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/pieces", get(list_pieces))
        .route("/pieces/{id}", get(get_piece))
        .route("/pieces/{id}/tracks/{kind}", get(get_track))
        .route("/pieces/{id}/poses", get(get_poses))
        .route("/pieces/{id}/edits", axum::routing::post(post_edit))
        .route("/pieces/{id}/status", get(get_status).post(post_status))
        .route("/pieces/{id}/backup", get(get_backup).post(post_backup))
        .route("/pieces/{id}/gate-decisions", get(get_decisions))
        // POST takes a job kind, GET a job id.
        .route("/jobs/{name}", get(get_job).post(post_job))
        .with_state(state)
}

async fn blocking<T, F>(f: F) -> Result<T, ServiceError>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::BadRequest(format!("task failed: {e}")))?
}

async fn list_pieces(State(s): State<AppState>) -> ApiResult<Vec<PieceSummary>> {
    let jobs = s.jobs.clone();
    blocking(move || {
        let store = jobs.store();
        store.piece_ids()?.iter().map(|id| store.summary(id)).collect::<Result<Vec<_>, _>>()
    })
    .await
    .map(Json)
}

async fn get_piece(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<PieceSummary> {
    s.store().ensure_piece(&id)?;
    Ok(Json(s.store().summary(&id)?))
}

fn track_kind(kind: &str) -> Result<TrackKind, ServiceError> {
    match kind {
        "rule" => Ok(TrackKind::Rule),
        "edited" => Ok(TrackKind::Edited),
        "probe" => Ok(TrackKind::Probe),
        other => Err(ServiceError::NotFound(format!("track kind {other}"))),
    }
}

async fn get_track(
    State(s): State<AppState>,
    Path((id, kind)): Path<(String, String)>,
) -> ApiResult<FingeringTrack> {
    let kind = track_kind(&kind)?;
    s.store().ensure_piece(&id)?;
    Ok(Json(s.store().require_track(&id, kind)?))
}

#[derive(Debug, Deserialize)]
pub struct FrameRange {
    pub from: Option<u32>,
    pub to: Option<u32>,
}

/// Pose frames `[from, to)`, clipped to the track.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseSlice {
    pub piece_id: String,
    pub frame_rate_hz: f64,
    pub from: u32,
    pub total_frames: usize,
    pub frames: Vec<PoseFrame>,
}

async fn get_poses(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(range): Query<FrameRange>,
) -> ApiResult<PoseSlice> {
    s.store().ensure_piece(&id)?;
    let poses = s.store().poses(&id)?;
    let total = poses.frames.len();
    let from = range.from.unwrap_or(0);
    let to = range.to.map_or(total, |t| t as usize);
    if (from as usize) > to {
        return Err(ServiceError::BadRequest(format!("from {from} is after to {to}")));
    }
    let lo = (from as usize).min(total);
    let hi = to.min(total);
    Ok(Json(PoseSlice {
        piece_id: poses.piece_id,
        frame_rate_hz: poses.frame_rate_hz,
        from,
        total_frames: total,
        frames: poses.frames[lo..hi].to_vec(),
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EditResponse {
    pub version: u64,
    pub track: FingeringTrack,
}

async fn post_edit(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(op): Json<EditOp>,
) -> ApiResult<EditResponse> {
    let jobs = s.jobs.clone();
    blocking(move || {
        let (track, version) = jobs.store().apply_edit(&id, &op)?;
        Ok(EditResponse { version, track })
    })
    .await
    .map(Json)
}

async fn get_status(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<ReviewStatus> {
    s.store().ensure_piece(&id)?;
    Ok(Json(s.store().status(&id)?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageUpdate {
    pub stage: ReviewStage,
    pub done: bool,
}

async fn post_status(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(update): Json<StageUpdate>,
) -> ApiResult<ReviewStatus> {
    s.store().ensure_piece(&id)?;
    Ok(Json(s.store().set_stage(&id, update.stage, update.done, Timestamp::now())?))
}

async fn post_backup(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(blob): Json<BackupBlob>,
) -> ApiResult<BackupReceipt> {
    Ok(Json(s.store().store_backup(&id, &blob)?))
}

/// Dry-run replay of the stored backup over the committed track.
async fn get_backup(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<RestoreReport> {
    let jobs = s.jobs.clone();
    blocking(move || jobs.store().restore(&id)).await.map(Json)
}

async fn get_decisions(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Value> {
    s.store().ensure_piece(&id)?;
    let decisions = s
        .store()
        .decisions(&id)?
        .ok_or_else(|| ServiceError::NotFound(format!("gate decisions for {id}")))?;
    Ok(Json(json!({ "piece_id": id, "decisions": decisions })))
}

async fn post_job(
    State(s): State<AppState>,
    Path(kind): Path<String>,
    body: Option<Json<Value>>,
) -> Result<(StatusCode, Json<JobRecord>), ServiceError> {
    let kind: JobKind = kind.parse()?;
    let params = body.map_or(Value::Null, |Json(v)| v);
    let record = s.jobs.start(kind, params);
    let jobs = s.jobs.clone();
    let pending = record.clone();
    tokio::task::spawn_blocking(move || jobs.finish(pending));
    Ok((StatusCode::ACCEPTED, Json(record)))
}

async fn get_job(State(s): State<AppState>, Path(job_id): Path<String>) -> ApiResult<JobRecord> {
    Ok(Json(s.jobs.get(&job_id)?))
}

/// Serves the API until the process is stopped.
pub async fn serve(store: CorpusStore, host: &str, port: u16) -> std::io::Result<()> {
    let app = router(AppState::new(store));
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await
}

//! HTTP routes over a [`SessionStore`].
//!
//! | route | answer |
//! |---|---|
//! | `POST /sessions` | `{session_id, recommendations}` |
//! | `GET /sessions/{id}` | session summary, labels and log |
//! | `POST /sessions/{id}/labels` | `{version, recommendations, rejected}` |
//! | `GET /sessions/{id}/ranking?limit=n` | ranked entries |
//! | `GET /sessions/{id}/export` | run file |
//! | `GET /assets/keyframes/{shot_id}` | `<shot_id>.jpg` from the asset directory |
//!
//! Failures answer `{code, message}` with a 4xx or 5xx status.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::session::{
    ApiError, CreateRequest, CreateResponse, LabelBatch, LabelEntry, PostOutcome, SessionStore,
    StrategySpec,
};

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

fn bad_body(e: JsonRejection) -> ApiError {
    ApiError::new(e.status().as_u16(), "bad_request", e.body_text())
}

type Shared = Arc<SessionStore>;

pub fn router(store: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(summary))
        .route("/sessions/{id}/labels", post(labels))
        .route("/sessions/{id}/ranking", get(ranking))
        .route("/sessions/{id}/export", get(export))
        .route("/assets/keyframes/{shot_id}", get(keyframe))
        .with_state(store)
}

async fn create(
    State(store): State<Shared>,
    body: Result<Json<CreateRequest>, JsonRejection>,
) -> Result<Json<CreateResponse>, ApiError> {
    let Json(req) = body.map_err(bad_body)?;
    // CAAF initialisation is quadratic in the gallery size
    let out = tokio::task::spawn_blocking(move || store.create(req))
        .await
        .map_err(|e| ApiError::new(500, "internal", e.to_string()))??;
    Ok(Json(out))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelsRequest {
    pub labels: Vec<LabelEntry>,
}

async fn labels(
    State(store): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<LabelsRequest>, JsonRejection>,
) -> Result<Json<PostOutcome>, ApiError> {
    let Json(req) = body.map_err(bad_body)?;
    let out = tokio::task::spawn_blocking(move || store.post_labels(&id, &req.labels))
        .await
        .map_err(|e| ApiError::new(500, "internal", e.to_string()))??;
    Ok(Json(out))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub run: String,
    pub topic_id: String,
    pub strategy: StrategySpec,
    pub version: u64,
    pub recommendations: Vec<String>,
    pub labels: Vec<LabelEntry>,
    pub log: Vec<LabelBatch>,
}

async fn summary(
    State(store): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<SessionSummary>, ApiError> {
    let s = store.snapshot(&id)?;
    Ok(Json(SessionSummary {
        session_id: s.id().into(),
        run: s.run().into(),
        topic_id: s.topic_id().into(),
        strategy: s.spec().clone(),
        version: s.version(),
        recommendations: s.recommendations(),
        labels: s.labels().iter().map(|l| LabelEntry::new(&l)).collect(),
        log: s.log().to_vec(),
    }))
}

#[derive(Debug, Deserialize)]
pub struct RankingQuery {
    pub limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RankedShot {
    pub rank: usize,
    pub shot_id: String,
    pub score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RankingResponse {
    pub session_id: String,
    pub topic_id: String,
    pub version: u64,
    pub total: usize,
    pub entries: Vec<RankedShot>,
}

async fn ranking(
    State(store): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<RankingQuery>,
) -> Result<Json<RankingResponse>, ApiError> {
    let s = store.snapshot(&id)?;
    let r = s.ranking();
    let entries = r
        .entries()
        .iter()
        .take(q.limit.unwrap_or(usize::MAX))
        .enumerate()
        .map(|(i, (shot, score))| RankedShot {
            rank: i + 1,
            shot_id: shot.clone(),
            score: *score,
        })
        .collect();
    Ok(Json(RankingResponse {
        session_id: id,
        topic_id: r.topic_id().into(),
        version: s.version(),
        total: r.len(),
        entries,
    }))
}

async fn export(State(store): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let body = store.export(&id)?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], body).into_response())
}

async fn keyframe(
    State(store): State<Shared>,
    Path(shot_id): Path<String>,
) -> Result<Response, ApiError> {
    let missing = || ApiError::new(404, "unknown_asset", format!("no keyframe for {shot_id}"));
    let dir = store.assets_dir().ok_or_else(missing)?;
    if shot_id.is_empty() || shot_id.contains(['/', '\\']) || shot_id.starts_with('.') {
        return Err(missing());
    }
    let bytes = tokio::fs::read(dir.join(format!("{shot_id}.jpg")))
        .await
        .map_err(|_| missing())?;
    Ok(([(header::CONTENT_TYPE, "image/jpeg")], bytes).into_response())
}

//! HTTP API over [`ReviewQueue`].
//!
//! | method | path                    | body / query                  |
//! |--------|-------------------------|-------------------------------|
//! | GET    | `/queue/next`           | `?annotator=` or header       |
//! | GET    | `/items/{id}`           |                               |
//! | POST   | `/items/{id}/verdict`   | [`VerdictRequest`]            |
//! | POST   | `/batches`              | JSON array of samples         |
//! | GET    | `/export/verified`      | NDJSON response               |
//! | GET    | `/stats`                |                               |
//!
//! The annotator may be named by the `x-annotator-id` header instead of the
//! query string or body. Errors come back as `{"error", "message"}`.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lras_core::curation::SynthesizedSample;
use lras_core::review::{
    Decision, EnqueueReport, QueueStats, RejectReason, ReviewError, ReviewItem, ReviewQueue, ReviewVerdict,
};
use lras_core::trajectory::{validate_with, FormatReport, DEFAULT_MAX_TURNS};
use serde::{Deserialize, Serialize};

pub const ANNOTATOR_HEADER: &str = "x-annotator-id";

/// An item plus the format report the reviewer sees as badges.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemView {
    #[serde(flatten)]
    pub item: ReviewItem,
    pub format: FormatReport,
}

impl From<ReviewItem> for ItemView {
    fn from(item: ReviewItem) -> Self {
        let t = &item.sample.trajectory;
        let format = validate_with(t, item.sample.validation_profile(), DEFAULT_MAX_TURNS.max(t.turns.len()));
        Self { item, format }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NextResponse {
    pub item: Option<ItemView>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictRequest {
    pub decision: Decision,
    #[serde(default)]
    pub reject_reasons: BTreeSet<RejectReason>,
    #[serde(default)]
    pub note: String,
    #[serde(default)]
    pub annotator_id: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug)]
pub enum ApiError {
    Review(ReviewError),
    BadRequest(String),
    Internal(String),
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        Self::Review(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::BadRequest(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, message) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "bad_request", m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", m),
            ApiError::Review(e) => {
                let (status, code) = match &e {
                    ReviewError::UnknownSample(_) => (StatusCode::NOT_FOUND, "unknown_sample"),
                    ReviewError::AlreadyDecided(_) => (StatusCode::CONFLICT, "already_decided"),
                    ReviewError::LeasedToOther { .. } => (StatusCode::CONFLICT, "leased_to_other"),
                    ReviewError::InvalidVerdict(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_verdict"),
                    ReviewError::Malformed { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "malformed_sample"),
                    ReviewError::Io { .. } | ReviewError::Corrupt { .. } => {
                        tracing::error!(error = %e, "review log failure");
                        (StatusCode::INTERNAL_SERVER_ERROR, "storage")
                    }
                };
                (status, code, e.to_string())
            }
        };
        (
            status,
            Json(ErrorBody {
                error: code.into(),
                message,
            }),
        )
            .into_response()
    }
}

type Shared = Arc<ReviewQueue>;

pub fn router(queue: Shared) -> Router {
    Router::new()
        .route("/queue/next", get(next_item))
        .route("/items/{id}", get(get_item))
        .route("/items/{id}/verdict", post(submit_verdict))
        .route("/batches", post(enqueue))
        .route("/export/verified", get(export_verified))
        .route("/stats", get(stats))
        .with_state(queue)
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(addr: SocketAddr, queue: Shared) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "review service listening");
    axum::serve(listener, router(queue))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn header_annotator(headers: &HeaderMap) -> Option<String> {
    headers
        .get(ANNOTATOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(str::to_string)
}

// Queue writes may fsync; keep them off the async workers.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ReviewError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(format!("worker failed: {e}")))?
        .map_err(ApiError::from)
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: Option<String>,
}

async fn next_item(
    State(q): State<Shared>,
    Query(query): Query<NextQuery>,
    headers: HeaderMap,
) -> Result<Json<NextResponse>, ApiError> {
    let annotator = query
        .annotator
        .filter(|a| !a.trim().is_empty())
        .or_else(|| header_annotator(&headers))
        .ok_or_else(|| ApiError::BadRequest("annotator is required".into()))?;
    let item = blocking(move || q.next_item(&annotator)).await?;
    Ok(Json(NextResponse {
        item: item.map(ItemView::from),
    }))
}

async fn get_item(State(q): State<Shared>, Path(id): Path<String>) -> Result<Json<ItemView>, ApiError> {
    q.get(&id)
        .map(|i| Json(i.into()))
        .ok_or_else(|| ReviewError::UnknownSample(id).into())
}

async fn submit_verdict(
    State(q): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<VerdictRequest>, JsonRejection>,
) -> Result<Json<ItemView>, ApiError> {
    let Json(req) = body?;
    let annotator_id = req
        .annotator_id
        .filter(|a| !a.trim().is_empty())
        .or_else(|| header_annotator(&headers))
        .unwrap_or_default();
    let verdict = ReviewVerdict {
        sample_id: id,
        decision: req.decision,
        reject_reasons: req.reject_reasons,
        note: req.note,
        annotator_id,
        timestamp_ms: 0,
    };
    let item = blocking(move || q.submit_verdict(verdict)).await?;
    Ok(Json(item.into()))
}

async fn enqueue(
    State(q): State<Shared>,
    body: Result<Json<Vec<SynthesizedSample>>, JsonRejection>,
) -> Result<Json<EnqueueReport>, ApiError> {
    let Json(samples) = body?;
    Ok(Json(blocking(move || q.enqueue_batch(samples)).await?))
}

async fn export_verified(State(q): State<Shared>) -> Result<Response, ApiError> {
    let mut out = String::new();
    for s in q.export_verified() {
        let line = serde_json::to_string(&s).map_err(|e| ApiError::Internal(e.to_string()))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], out).into_response())
}

async fn stats(State(q): State<Shared>) -> Json<QueueStats> {
    Json(q.stats())
}

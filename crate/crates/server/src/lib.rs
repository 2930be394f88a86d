//! HTTP API for the two-phase experiment.
//!
//! Every call after `POST /api/session` identifies the participant with the
//! `x-session-token` header. All mutations go through one
//! [`ExperimentService`] behind a mutex, so the event log has a single
//! writer.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{FromRequestParts, State};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Deserializer, Serialize};
use tower_http::services::ServeDir;
use ttt_core::corpus::Sentiment;
use ttt_core::explain::Origin;
use ttt_core::protocol::{
    AnnotationTask, BotStatus, EventStore, ExperimentService, JudgmentTask, ProtocolError, SessionInfo,
};
use ttt_core::text_model::tokenize;

pub const TOKEN_HEADER: &str = "x-session-token";

type Shared<S> = Arc<Mutex<ExperimentService<S>>>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn missing_token() -> Self {
        Self {
            status: StatusCode::UNAUTHORIZED,
            kind: "unknown_session",
            message: format!("missing {TOKEN_HEADER} header"),
        }
    }
}

impl From<ProtocolError> for ApiError {
    fn from(e: ProtocolError) -> Self {
        let (status, kind) = match &e {
            ProtocolError::UnknownSession => (StatusCode::UNAUTHORIZED, "unknown_session"),
            ProtocolError::BotCheckNotPassed => (StatusCode::FORBIDDEN, "bot_check_not_passed"),
            ProtocolError::AlreadyAnswered => (StatusCode::CONFLICT, "already_answered"),
            ProtocolError::UnassignedReview(_) => (StatusCode::CONFLICT, "unassigned_review"),
            ProtocolError::Exp1Incomplete => (StatusCode::CONFLICT, "exp1_incomplete"),
            ProtocolError::InvalidAnswerIndex(_) | ProtocolError::Validation(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "validation")
            }
            ProtocolError::Storage(_) if e.is_retriable() => (StatusCode::SERVICE_UNAVAILABLE, "storage_unavailable"),
            ProtocolError::Storage(_) | ProtocolError::Setup(_) | ProtocolError::Replay(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        Self {
            status,
            kind,
            message: e.to_string(),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.kind,
            message: &self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

/// The session token from the request header.
pub struct SessionToken(pub String);

impl<St: Send + Sync> FromRequestParts<St> for SessionToken {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, _state: &St) -> Result<Self, Self::Rejection> {
        parts
            .headers
            .get(TOKEN_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(|v| SessionToken(v.to_string()))
            .ok_or_else(ApiError::missing_token)
    }
}

#[derive(Debug, Deserialize)]
pub struct SessionRequest {
    pub participant_id: String,
}

#[derive(Debug, Deserialize)]
pub struct BotCheckRequest {
    pub answer_index: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BotCheckResponse {
    pub status: BotStatus,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Exp1Next {
    Review {
        review_id: String,
        text: String,
        /// Clickable words; any three distinct ones validate.
        tokens: Vec<String>,
    },
    Done {
        done: bool,
    },
}

#[derive(Debug, Deserialize)]
pub struct AnnotationRequest {
    pub review_id: String,
    pub label: Sentiment,
    pub marked_words: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnnotationResponse {
    pub stored: bool,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Exp2Next {
    Trial {
        review_id: String,
        text: String,
        highlighted_words: Vec<String>,
        shown_prediction: Sentiment,
    },
    Done {
        done: bool,
    },
}

fn origin_from_str<'de, D: Deserializer<'de>>(d: D) -> Result<Origin, D::Error> {
    let s = String::deserialize(d)?;
    s.to_lowercase().parse().map_err(serde::de::Error::custom)
}

#[derive(Debug, Deserialize)]
pub struct JudgmentRequest {
    pub review_id: String,
    /// `human`, `machine` or `ai`.
    #[serde(deserialize_with = "origin_from_str")]
    pub judged_origin: Origin,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JudgmentResponse {
    pub accepted: bool,
}

fn lock<S>(service: &Shared<S>) -> std::sync::MutexGuard<'_, ExperimentService<S>> {
    service.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

async fn open_session<S: EventStore + 'static>(
    State(service): State<Shared<S>>,
    Json(req): Json<SessionRequest>,
) -> Result<Json<SessionInfo>, ApiError> {
    Ok(Json(lock(&service).open_session(&req.participant_id)?))
}

async fn bot_check<S: EventStore + 'static>(
    State(service): State<Shared<S>>,
    SessionToken(token): SessionToken,
    Json(req): Json<BotCheckRequest>,
) -> Result<Json<BotCheckResponse>, ApiError> {
    let status = lock(&service).submit_bot_check(&token, req.answer_index)?;
    Ok(Json(BotCheckResponse { status }))
}

async fn exp1_next<S: EventStore + 'static>(
    State(service): State<Shared<S>>,
    SessionToken(token): SessionToken,
) -> Result<Json<Exp1Next>, ApiError> {
    let task = lock(&service).next_annotation_task(&token)?;
    Ok(Json(match task {
        AnnotationTask::Review(r) => Exp1Next::Review {
            tokens: tokenize(&r.text),
            review_id: r.id,
            text: r.text,
        },
        AnnotationTask::Done => Exp1Next::Done { done: true },
    }))
}

async fn exp1_annotation<S: EventStore + 'static>(
    State(service): State<Shared<S>>,
    SessionToken(token): SessionToken,
    Json(req): Json<AnnotationRequest>,
) -> Result<Json<AnnotationResponse>, ApiError> {
    lock(&service).record_annotation(&token, &req.review_id, req.label, req.marked_words)?;
    Ok(Json(AnnotationResponse { stored: true }))
}

async fn exp2_next<S: EventStore + 'static>(
    State(service): State<Shared<S>>,
    SessionToken(token): SessionToken,
) -> Result<Json<Exp2Next>, ApiError> {
    let task = lock(&service).next_judgment_trial(&token)?;
    Ok(Json(match task {
        JudgmentTask::Trial(t) => Exp2Next::Trial {
            review_id: t.review_id,
            text: t.text,
            highlighted_words: t.highlighted_words,
            shown_prediction: t.shown_prediction,
        },
        JudgmentTask::Done => Exp2Next::Done { done: true },
    }))
}

async fn exp2_judgment<S: EventStore + 'static>(
    State(service): State<Shared<S>>,
    SessionToken(token): SessionToken,
    Json(req): Json<JudgmentRequest>,
) -> Result<Json<JudgmentResponse>, ApiError> {
    lock(&service).record_judgment(&token, &req.review_id, req.judged_origin)?;
    Ok(Json(JudgmentResponse { accepted: true }))
}

async fn health() -> &'static str {
    "ok"
}

/// Routes of the experiment API, optionally serving a static web bundle
/// for every other path.
pub fn router<S: EventStore + 'static>(service: Shared<S>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/session", post(open_session::<S>))
        .route("/api/bot-check", post(bot_check::<S>))
        .route("/api/exp1/next", get(exp1_next::<S>))
        .route("/api/exp1/annotation", post(exp1_annotation::<S>))
        .route("/api/exp2/next", get(exp2_next::<S>))
        .route("/api/exp2/judgment", post(exp2_judgment::<S>))
        .with_state(service);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub fn shared<S>(service: ExperimentService<S>) -> Shared<S> {
    Arc::new(Mutex::new(service))
}

/// Serves `app` until the process is stopped.
pub async fn serve(addr: SocketAddr, app: Router) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, app).await
}

use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use futures::stream::{self, Stream, StreamExt};
use serde::{Deserialize, Serialize};

use super::{ServiceError, SessionManager};
use crate::model::to_canonical;
use crate::orchestrator::SessionConfig;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    task: String,
    scenario_ref: String,
    #[serde(default)]
    config: Option<SessionConfig>,
}

#[derive(Debug, Serialize)]
struct Created {
    session_id: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackRequest {
    answer: String,
}

#[derive(Debug, Serialize)]
struct Ack {
    ok: bool,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownScenario(_) => "unknown_scenario",
            ServiceError::InvalidConfig(_) => "invalid_config",
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::NotAwaitingFeedback => "not_awaiting_feedback",
            ServiceError::EmptyAnswer => "empty_answer",
            ServiceError::SessionStillRunning => "session_still_running",
            ServiceError::AlreadyStarted => "already_started",
            ServiceError::Setup(_) => "setup_failed",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownScenario(_) | ServiceError::InvalidConfig(_) => {
                StatusCode::BAD_REQUEST
            }
            ServiceError::EmptyAnswer => StatusCode::BAD_REQUEST,
            ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::NotAwaitingFeedback
            | ServiceError::SessionStillRunning
            | ServiceError::AlreadyStarted => StatusCode::CONFLICT,
            ServiceError::Setup(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

fn canonical<T: Serialize>(status: StatusCode, body: &T) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        to_canonical(body),
    )
        .into_response()
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code(),
            message: self.to_string(),
        };
        canonical(self.status(), &body)
    }
}

fn bad_request(message: String) -> Response {
    canonical(
        StatusCode::BAD_REQUEST,
        &ErrorBody {
            error: "bad_request",
            message,
        },
    )
}

type Shared = Arc<SessionManager>;

/// Routes of the session API. `console` is served at `/` when given.
pub fn router(manager: Shared, console: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}/start", post(start))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/report", get(report))
        .route("/scenarios", get(scenarios))
        .with_state(manager);
    match console {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Binds `addr` and serves until the process ends. `on_bound` receives the
/// actual address, which matters when the port is 0.
pub async fn serve(
    manager: Shared,
    addr: &str,
    console: Option<PathBuf>,
    on_bound: impl FnOnce(SocketAddr),
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(manager, console)).await
}

async fn create(State(m): State<Shared>, body: String) -> Response {
    let req: CreateRequest = match serde_json::from_str(&body) {
        Ok(r) => r,
        Err(e) => return bad_request(e.to_string()),
    };
    let config = req.config.unwrap_or_default();
    match m.create_session(&req.task, &req.scenario_ref, config) {
        Ok(session_id) => canonical(StatusCode::CREATED, &Created { session_id }),
        Err(e) => e.into_response(),
    }
}

async fn list(State(m): State<Shared>) -> Response {
    canonical(StatusCode::OK, &m.list())
}

async fn start(State(m): State<Shared>, Path(id): Path<String>) -> Response {
    match m.start(&id) {
        Ok(()) => canonical(StatusCode::ACCEPTED, &m.info(&id).ok()),
        Err(e) => e.into_response(),
    }
}

async fn events(State(m): State<Shared>, Path(id): Path<String>) -> Response {
    match m.subscribe(&id) {
        Ok(sub) => Sse::new(event_stream(sub))
            .keep_alive(KeepAlive::default())
            .into_response(),
        Err(e) => e.into_response(),
    }
}

fn event_stream(sub: super::Subscription) -> impl Stream<Item = Result<SseEvent, Infallible>> {
    stream::unfold(sub, |mut sub| async move {
        let batch = sub.next_batch().await;
        if batch.is_empty() {
            None
        } else {
            Some((batch, sub))
        }
    })
    .flat_map(|batch| {
        stream::iter(batch.into_iter().map(|e| {
            Ok(SseEvent::default()
                .event(e.kind.name())
                .id(e.seq.to_string())
                .data(to_canonical(&e)))
        }))
    })
}

async fn feedback(State(m): State<Shared>, Path(id): Path<String>, body: String) -> Response {
    let req: FeedbackRequest = match serde_json::from_str(&body) {
        Ok(r) => r,
        Err(e) => return bad_request(e.to_string()),
    };
    match m.post_feedback(&id, &req.answer) {
        Ok(()) => canonical(StatusCode::OK, &Ack { ok: true }),
        Err(e) => e.into_response(),
    }
}

async fn report(State(m): State<Shared>, Path(id): Path<String>) -> Response {
    match m.report(&id) {
        Ok(r) => canonical(StatusCode::OK, &r),
        Err(e) => e.into_response(),
    }
}

async fn scenarios(State(m): State<Shared>) -> Response {
    canonical(StatusCode::OK, &m.catalog().list())
}

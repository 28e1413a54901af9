//! HTTP and WebSocket front end.
//!
//! | method | path                            | auth            |
//! |--------|---------------------------------|-----------------|
//! | GET    | `/healthz`                      | none            |
//! | POST   | `/sessions`                     | none            |
//! | POST   | `/sessions/{id}/join`           | none            |
//! | GET    | `/sessions/{id}/summary`        | instructor key  |
//! | POST   | `/sessions/{id}/threshold`      | instructor key  |
//! | POST   | `/sessions/{id}/close`          | instructor key  |
//! | GET    | `/sessions/{id}/student` (ws)   | token per frame |
//! | GET    | `/sessions/{id}/instructor` (ws)| instructor key  |
//!
//! The instructor key goes in the `x-instructor-key` header or a `key`
//! query parameter (browsers cannot set headers on WebSocket requests).
//! `POST /sessions` takes an optional JSON body shaped like the
//! `[session]` config section; omitted fields use the server defaults.

use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::broadcast::error::RecvError;

use crate::config::SessionConfig;
use crate::protocol::{InstructorCommand, InstructorMessage, StudentMessage, StudentReply};
use crate::service::{Service, SessionHandle};
use crate::session::{SessionError, SessionState};

pub const KEY_HEADER: &str = "x-instructor-key";

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

pub struct ApiError(StatusCode, ErrorBody);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::UnknownSession => StatusCode::NOT_FOUND,
            SessionError::Closed => StatusCode::CONFLICT,
            SessionError::UnknownToken | SessionError::BadKey => StatusCode::UNAUTHORIZED,
            SessionError::Invalid { .. } => StatusCode::BAD_REQUEST,
        };
        let field = match &e {
            SessionError::Invalid { field, .. } => Some(field.clone()),
            _ => None,
        };
        ApiError(
            status,
            ErrorBody {
                error: e.to_string(),
                field,
            },
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Default, Deserialize)]
pub struct KeyQuery {
    pub key: Option<String>,
}

fn authorize(handle: &SessionHandle, headers: &HeaderMap, q: &KeyQuery) -> Result<(), SessionError> {
    let header = headers.get(KEY_HEADER).and_then(|v| v.to_str().ok());
    handle.check_key(header.or(q.key.as_deref()))
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/join", post(join))
        .route("/sessions/{id}/summary", get(summary))
        .route("/sessions/{id}/threshold", post(set_threshold))
        .route("/sessions/{id}/close", post(close))
        .route("/sessions/{id}/student", get(student_ws))
        .route("/sessions/{id}/instructor", get(instructor_ws))
        .with_state(service)
}

/// Serves until `shutdown` resolves, then closes every session so record
/// files end with a close line.
pub async fn serve(
    listener: TcpListener,
    service: Arc<Service>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let svc = service.clone();
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async move {
            shutdown.await;
            tracing::info!("shutting down");
            svc.shutdown().await;
        })
        .await
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

async fn create_session(State(svc): State<Arc<Service>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let cfg = if body.iter().all(u8::is_ascii_whitespace) {
        svc.default_session_config()
    } else {
        merge_config(svc.default_session_config(), &body)?
    };
    let created = svc.create_session(cfg).await?;
    Ok((StatusCode::CREATED, Json(created)))
}

/// Overlays a partial JSON config on the server defaults.
fn merge_config(base: SessionConfig, body: &[u8]) -> Result<SessionConfig, SessionError> {
    let invalid = |field: &str, reason: String| SessionError::Invalid {
        field: field.to_owned(),
        reason,
    };
    let patch: serde_json::Value = serde_json::from_slice(body).map_err(|e| invalid("body", e.to_string()))?;
    let mut merged = serde_json::to_value(base).map_err(|e| invalid("body", e.to_string()))?;
    merge_json(&mut merged, patch);
    serde_json::from_value(merged).map_err(|e| invalid("body", e.to_string()))
}

fn merge_json(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                merge_json(b.entry(k).or_insert(serde_json::Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Joined {
    pub session: String,
    pub token: String,
}

async fn join(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Json<Joined>> {
    let handle = svc.get(&id)?;
    let token = handle.join()?;
    Ok(Json(Joined { session: id, token }))
}

async fn summary(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<KeyQuery>,
) -> ApiResult<impl IntoResponse> {
    let handle = svc.get(&id)?;
    authorize(&handle, &headers, &q)?;
    Ok(Json(handle.summary()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ThresholdBody {
    pub threshold: f64,
}

async fn set_threshold(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<KeyQuery>,
    Json(body): Json<ThresholdBody>,
) -> ApiResult<Json<ThresholdBody>> {
    let handle = svc.get(&id)?;
    authorize(&handle, &headers, &q)?;
    if handle.state() == SessionState::Closed {
        return Err(SessionError::Closed.into());
    }
    let threshold = handle.set_threshold(body.threshold)?;
    Ok(Json(ThresholdBody { threshold }))
}

async fn close(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<KeyQuery>,
) -> ApiResult<impl IntoResponse> {
    let handle = svc.get(&id)?;
    authorize(&handle, &headers, &q)?;
    handle.close("closed by instructor").await;
    Ok(Json(handle.summary()))
}

async fn student_ws(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> ApiResult<Response> {
    let handle = svc.get(&id)?;
    if handle.state() == SessionState::Closed {
        return Err(SessionError::Closed.into());
    }
    Ok(ws.on_upgrade(move |socket| student_loop(handle, socket)))
}

async fn send_json<T: Serialize>(socket: &mut WebSocket, msg: &T) -> bool {
    match serde_json::to_string(msg) {
        Ok(text) => socket.send(Message::Text(text.into())).await.is_ok(),
        Err(_) => false,
    }
}

fn student_reply(handle: &SessionHandle, text: &str) -> StudentReply {
    let msg: StudentMessage = match serde_json::from_str(text) {
        Ok(m) => m,
        Err(e) => {
            return StudentReply::Error {
                message: format!("malformed frame: {e}"),
            }
        }
    };
    let StudentMessage::Gaze { token, samples } = msg;
    match handle.ingest(&token, &samples) {
        Ok(c) => StudentReply::Ack {
            accepted: c.accepted,
            dropped: c.dropped,
        },
        Err(e) => StudentReply::Error { message: e.to_string() },
    }
}

async fn student_loop(handle: Arc<SessionHandle>, mut socket: WebSocket) {
    loop {
        tokio::select! {
            msg = socket.recv() => match msg {
                Some(Ok(Message::Text(text))) => {
                    let reply = student_reply(&handle, &text);
                    if !send_json(&mut socket, &reply).await {
                        return;
                    }
                }
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => return,
                Some(Ok(_)) => {}
            },
            _ = handle.closed() => {
                let _ = send_json(&mut socket, &StudentReply::Error { message: SessionError::Closed.to_string() }).await;
                let _ = socket.send(Message::Close(None)).await;
                return;
            }
        }
    }
}

async fn instructor_ws(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<KeyQuery>,
    ws: WebSocketUpgrade,
) -> ApiResult<Response> {
    let handle = svc.get(&id)?;
    authorize(&handle, &headers, &q)?;
    // Subscribe before upgrading so no event falls between the two.
    let events = handle.subscribe();
    Ok(ws.on_upgrade(move |socket| instructor_loop(handle, events, socket)))
}

async fn instructor_loop(
    handle: Arc<SessionHandle>,
    mut events: tokio::sync::broadcast::Receiver<InstructorMessage>,
    mut socket: WebSocket,
) {
    if handle.state() == SessionState::Closed {
        let _ = send_json(&mut socket, &InstructorMessage::Closed { session: handle.id().to_owned() }).await;
        return;
    }
    loop {
        tokio::select! {
            ev = events.recv() => match ev {
                Ok(msg) => {
                    let last = matches!(msg, InstructorMessage::Closed { .. });
                    if !send_json(&mut socket, &msg).await || last {
                        let _ = socket.send(Message::Close(None)).await;
                        return;
                    }
                }
                Err(RecvError::Lagged(n)) => {
                    tracing::warn!(session = %handle.id(), missed = n, "instructor subscriber lagging");
                }
                Err(RecvError::Closed) => return,
            },
            msg = socket.recv() => match msg {
                Some(Ok(Message::Text(text))) => {
                    let reply = match serde_json::from_str::<InstructorCommand>(&text) {
                        Ok(InstructorCommand::SetThreshold { threshold }) => match handle.set_threshold(threshold) {
                            // Accepted changes reach every subscriber through the broadcast.
                            Ok(_) => None,
                            Err(e) => Some(InstructorMessage::Threshold { threshold, accepted: false, reason: Some(e.to_string()) }),
                        },
                        Err(e) => Some(InstructorMessage::Error { message: format!("malformed command: {e}") }),
                    };
                    if let Some(reply) = reply {
                        if !send_json(&mut socket, &reply).await {
                            return;
                        }
                    }
                }
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => return,
                Some(Ok(_)) => {}
            }
        }
    }
}

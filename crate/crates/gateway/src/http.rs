//! HTTP/JSON and WebSocket surface under `/api/v1`.

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use ets_client::wire::{CommandReply, ContactRegistry, ErrorBody, ReplayRequest};
use ets_core::sim::SimError;
use serde::Deserialize;
use tokio::sync::broadcast::error::RecvError;

use crate::runtime::{CommandKind, CommandOutcome, GatewayHandle, QueueClosed};

pub fn router(handle: GatewayHandle) -> Router {
    Router::new()
        .route("/api/v1/status", get(status))
        .route("/api/v1/panic", post(panic))
        .route("/api/v1/cancel", post(cancel))
        .route("/api/v1/send", post(send))
        .route("/api/v1/reset", post(reset))
        .route("/api/v1/contacts", put(contacts))
        .route("/api/v1/events", get(events))
        .route("/api/v1/replay", post(replay))
        .route("/api/v1/live", get(live))
        .with_state(handle)
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (
        status,
        Json(ErrorBody {
            error: msg.into(),
            fields: Vec::new(),
        }),
    )
        .into_response()
}

impl IntoResponse for QueueClosed {
    fn into_response(self) -> Response {
        error(StatusCode::SERVICE_UNAVAILABLE, self.to_string())
    }
}

async fn status(State(h): State<GatewayHandle>) -> Result<Response, QueueClosed> {
    Ok(Json(h.status().await?).into_response())
}

async fn run_command(h: &GatewayHandle, kind: CommandKind) -> Result<Response, QueueClosed> {
    let reply = |code, state: ets_core::engine::EngineState, diagnostic| {
        (
            code,
            Json(CommandReply {
                state: state.name().to_string(),
                diagnostic,
            }),
        )
            .into_response()
    };
    Ok(match h.command(kind).await? {
        CommandOutcome::Started(s) => reply(StatusCode::ACCEPTED, s, None),
        CommandOutcome::Done(s) => reply(StatusCode::OK, s, None),
        CommandOutcome::Ignored(s, why) => reply(StatusCode::OK, s, Some(why)),
        CommandOutcome::Rejected(e) => error(StatusCode::CONFLICT, e.to_string()),
        CommandOutcome::Failed(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    })
}

async fn panic(State(h): State<GatewayHandle>) -> Result<Response, QueueClosed> {
    run_command(&h, CommandKind::Panic).await
}

async fn cancel(State(h): State<GatewayHandle>) -> Result<Response, QueueClosed> {
    run_command(&h, CommandKind::Cancel).await
}

async fn send(State(h): State<GatewayHandle>) -> Result<Response, QueueClosed> {
    run_command(&h, CommandKind::Send).await
}

async fn reset(State(h): State<GatewayHandle>) -> Result<Response, QueueClosed> {
    run_command(&h, CommandKind::Reset).await
}

async fn contacts(State(h): State<GatewayHandle>, Json(c): Json<ContactRegistry>) -> Result<Response, QueueClosed> {
    let fields = c.validate();
    if !fields.is_empty() {
        let body = ErrorBody {
            error: "invalid contacts".into(),
            fields,
        };
        return Ok((StatusCode::UNPROCESSABLE_ENTITY, Json(body)).into_response());
    }
    Ok(match h.put_contacts(c.clone()).await? {
        Ok(()) => Json(c).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    })
}

#[derive(Deserialize)]
struct Since {
    #[serde(default)]
    since: u64,
}

async fn events(State(h): State<GatewayHandle>, Query(q): Query<Since>) -> Result<Response, QueueClosed> {
    Ok(Json(h.events(q.since).await?).into_response())
}

async fn replay(State(h): State<GatewayHandle>, Json(req): Json<ReplayRequest>) -> Response {
    let speed = req.speed.unwrap_or(f64::INFINITY);
    if speed.is_nan() || speed <= 0.0 {
        return error(StatusCode::UNPROCESSABLE_ENTITY, SimError::BadSpeed(speed).to_string());
    }
    if let Err(e) = ets_core::sim::check_sorted(&req.records) {
        return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string());
    }
    if !req.wait {
        tokio::spawn(async move {
            if let Err(e) = h.replay(&req.records, speed).await {
                tracing::warn!(error = %e, "background replay failed");
            }
        });
        return StatusCode::ACCEPTED.into_response();
    }
    match h.replay(&req.records, speed).await {
        Ok(report) => Json(report).into_response(),
        Err(e @ SimError::Sink(_)) => error(StatusCode::SERVICE_UNAVAILABLE, e.to_string()),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    }
}

async fn live(State(h): State<GatewayHandle>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| stream_live(h, socket))
}

async fn stream_live(h: GatewayHandle, mut socket: WebSocket) {
    let Ok(mut sub) = h.subscribe().await else {
        return;
    };
    if socket.send(Message::Text(sub.snapshot.into())).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            msg = sub.rx.recv() => match msg {
                Ok(text) => {
                    if socket.send(Message::Text(text.as_ref().into())).await.is_err() {
                        return;
                    }
                }
                Err(RecvError::Lagged(n)) => {
                    tracing::warn!(missed = n, "live subscriber fell behind; disconnecting");
                    let _ = socket.send(Message::Close(None)).await;
                    return;
                }
                Err(RecvError::Closed) => return,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

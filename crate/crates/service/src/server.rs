//! HTTP and websocket transport around [`SessionHandler`].

use std::future::Future;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use anglesizer_core::model::{DeviceProfile, EngineConfig};
use anglesizer_core::trace_io::{LogError, LogRecord, SessionLog};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::{Json, Router};
use thiserror::Error;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

use crate::handler::{Reply, SessionHandler};
use crate::protocol::{ErrorCode, Health, ServerMessage, PROTOCOL_VERSION};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("session log: {0}")]
    Log(#[from] LogError),
    #[error("server i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct ServerConfig {
    pub engine: EngineConfig,
    pub profile: DeviceProfile,
    /// Directory served for any path other than `/session` and `/health`.
    pub static_dir: Option<PathBuf>,
    /// Append-only log receiving assessment and feedback records.
    pub log_path: Option<PathBuf>,
}

#[derive(Clone)]
struct AppState {
    engine: EngineConfig,
    profile: DeviceProfile,
    started: Instant,
    log: Option<Arc<Mutex<SessionLog>>>,
}

pub fn router(config: &ServerConfig) -> Result<Router, ServiceError> {
    let log = match &config.log_path {
        Some(path) => Some(Arc::new(Mutex::new(SessionLog::open(path)?))),
        None => None,
    };
    let state = AppState { engine: config.engine.clone(), profile: config.profile.clone(), started: Instant::now(), log };
    let app = Router::new().route("/session", get(session_upgrade)).route("/health", get(health)).with_state(state);
    Ok(match &config.static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    })
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    config: &ServerConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let app = router(config)?;
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
    Ok(())
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        protocol_version: PROTOCOL_VERSION.to_string(),
        uptime_ms: state.started.elapsed().as_millis() as u64,
    })
}

async fn session_upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| run_session(socket, state))
}

async fn run_session(mut socket: WebSocket, state: AppState) {
    let mut handler = SessionHandler::new(state.engine.clone(), state.profile.clone());
    while let Some(Ok(msg)) = socket.recv().await {
        let reply = match msg {
            Message::Text(text) => handler.handle_text(text.as_str()),
            Message::Binary(_) => Reply {
                messages: vec![ServerMessage::error(ErrorCode::BadMessage, "binary frames are not supported")],
                close: true,
                ..Reply::default()
            },
            Message::Close(_) => break,
            Message::Ping(_) | Message::Pong(_) => continue,
        };
        let mut messages = reply.messages;
        if let Err(e) = append_records(&state, reply.records).await {
            messages.push(ServerMessage::error(ErrorCode::LogFailure, e.to_string()));
        }
        for m in messages {
            if socket.send(Message::Text(m.to_json().into())).await.is_err() {
                return;
            }
        }
        if reply.close {
            let _ = socket.send(Message::Close(None)).await;
            break;
        }
    }
}

async fn append_records(state: &AppState, records: Vec<LogRecord>) -> Result<(), LogError> {
    let Some(log) = state.log.clone() else { return Ok(()) };
    if records.is_empty() {
        return Ok(());
    }
    tokio::task::spawn_blocking(move || {
        let mut log = log.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
        records.iter().try_for_each(|r| log.append(r))
    })
    .await
    .map_err(|e| LogError::IoFailure(std::io::Error::other(e)))?
}

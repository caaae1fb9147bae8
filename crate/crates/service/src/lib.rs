//! Live teaching sessions over a websocket: `/session` speaks the JSON wire
//! protocol, `/health` reports the protocol version and uptime.

pub mod handler;
pub mod protocol;
pub mod server;

pub use handler::{Reply, SessionHandler};
pub use protocol::{ClientMessage, ErrorCode, Health, ServerMessage, PROTOCOL_VERSION};
pub use server::{router, serve, ServerConfig, ServiceError};

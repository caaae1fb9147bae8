//! Wire messages. One JSON object per websocket text frame, tagged by `type`.

use anglesizer_core::model::{DeviceProfile, FeedbackEvent, GestureKind, MeasurementResult, SensorFrame};
use anglesizer_core::teaching::{LearningModule, TeachingPhase, ToleranceMode};
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Hello {
        protocol_version: String,
    },
    StartSession {
        module: LearningModule,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gesture: Option<GestureKind>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        goal: Option<f64>,
        #[serde(default)]
        mode: ToleranceMode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        participant: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        day: Option<u32>,
        /// Overrides the server's device profile for this session.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        profile: Option<DeviceProfile>,
    },
    Frame {
        frame: SensorFrame,
    },
    EndAttempt {},
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    HandshakeRequired,
    VersionMismatch,
    BadMessage,
    InvalidRequest,
    NoSession,
    NonMonotonicTime,
    IllegalTransition,
    NoActivation,
    NeverStable,
    LogFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    SessionStarted {
        id: String,
        instructions: String,
    },
    Feedback {
        event: FeedbackEvent,
    },
    Measurement {
        result: MeasurementResult,
    },
    Phase {
        phase: TeachingPhase,
    },
    Result {
        passed: bool,
        value: f64,
        goal: f64,
        signed_error: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        relative_error: Option<f64>,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
}

impl ServerMessage {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        ServerMessage::Error { code, message: message.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub protocol_version: String,
    pub uptime_ms: u64,
}

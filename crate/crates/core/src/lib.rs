//! Measurement and teaching core: data model, trace files, synthetic traces,
//! the per-gesture measurement pipelines, activation, the teaching state
//! machine and evaluation statistics.

pub mod activation;
pub mod analytics;
pub mod engine;
pub mod model;
pub mod oracle;
pub mod teaching;
pub mod trace_io;

pub use activation::detect_activation;
pub use engine::{run_measurement, EngineError, Measurement, Pipeline};
pub use model::{
    DeviceProfile, EngineConfig, FeedbackEvent, FeedbackKind, GestureKind, MeasurementResult, Payload, SensorFrame,
    WarningCode,
};
pub use teaching::{AssessmentRecord, LearningModule, TeachingPhase, TeachingSession, ToleranceMode};
pub use trace_io::{TraceDocument, TraceError};

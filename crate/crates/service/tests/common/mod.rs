#![allow(dead_code)]

use anglesizer_core::model::{DeviceProfile, GestureKind, SensorFrame};
use anglesizer_core::oracle::gen_touch_trace;
use anglesizer_core::teaching::{LearningModule, ToleranceMode};
use anglesizer_service::{ClientMessage, PROTOCOL_VERSION};

pub fn hello() -> ClientMessage {
    ClientMessage::Hello { protocol_version: PROTOCOL_VERSION.into() }
}

pub fn start(module: LearningModule, gesture: Option<GestureKind>, goal: Option<f64>) -> ClientMessage {
    ClientMessage::StartSession {
        module,
        gesture,
        goal,
        mode: ToleranceMode::Tolerant,
        participant: Some("p01".into()),
        day: Some(1),
        profile: None,
    }
}

/// Concatenates two-finger oracle traces, shifting each to start after the previous one.
pub fn pinch_frames(distances_cm: &[f64]) -> Vec<SensorFrame> {
    let mut out: Vec<SensorFrame> = Vec::new();
    for (i, &d) in distances_cm.iter().enumerate() {
        let doc = gen_touch_trace(d, &DeviceProfile::default(), true, 0.0, i as u64).unwrap();
        let offset = out.last().map_or(0, |f| f.t_ms + 500);
        out.extend(doc.frames.into_iter().map(|mut f| {
            f.t_ms += offset;
            f
        }));
    }
    out
}

/// Hello, a guided two-finger session with a 6 cm goal, a 4 cm try, a
/// 6 cm correction and a 6 cm independent try.
pub fn guided_script() -> Vec<ClientMessage> {
    let mut script = vec![hello(), start(LearningModule::GuidedLearning, Some(GestureKind::TwoFingers), Some(6.0))];
    script.extend(pinch_frames(&[4.0, 6.0, 6.0]).into_iter().map(|frame| ClientMessage::Frame { frame }));
    script
}

//! Which gesture a window of raw frames activates in free exploration.

use crate::engine::{accumulate_rotation, norm, phone_parallel_ok};
use crate::model::{EngineConfig, GestureKind, Payload, SensorFrame, TouchPhase};

/// Evaluates the activation rules in strict priority order; the first match wins.
///
/// 1. two touch contacts → two fingers
/// 2. one contact held since its Down for `hold_to_start_ms` → one finger
/// 3. screen pressed and a palm in view → two hands
/// 4. screen pressed, phone level and yaw turning more than `activation_yaw_deg` → body rotation
/// 5. screen pressed and the phone moved more than `activation_motion_cm` → one hand
pub fn detect_activation(window: &[SensorFrame], cfg: &EngineConfig) -> Option<GestureKind> {
    let now = window.last()?.t_ms;

    let touches: Vec<(u64, &[crate::model::Contact])> = window
        .iter()
        .filter_map(|f| match &f.payload {
            Payload::Touch(t) => Some((f.t_ms, t.contacts.as_slice())),
            _ => None,
        })
        .collect();
    if let Some(&(_, latest)) = touches.last() {
        let active: Vec<_> = latest.iter().filter(|c| c.phase != TouchPhase::Up).collect();
        if active.len() == 2 {
            return Some(GestureKind::TwoFingers);
        }
        if let [only] = active.as_slice() {
            if held_since_down(&touches, only.id).is_some_and(|t_down| now.saturating_sub(t_down) >= cfg.hold_to_start_ms) {
                return Some(GestureKind::OneFinger);
            }
        }
    }

    let pressed = window
        .iter()
        .rev()
        .find_map(|f| match &f.payload {
            Payload::Press(p) => Some(p.pressed),
            _ => None,
        })
        .unwrap_or(false);
    if !pressed {
        return None;
    }

    let palm_in_view = window.iter().rev().find_map(|f| match &f.payload {
        Payload::Palm(p) => Some(p.detected),
        _ => None,
    });
    if palm_in_view == Some(true) {
        return Some(GestureKind::TwoHands);
    }

    let orientations: Vec<_> = window
        .iter()
        .filter_map(|f| match &f.payload {
            Payload::Orientation(o) => Some(o),
            _ => None,
        })
        .collect();
    if let Some(last) = orientations.last() {
        let yaws: Vec<f64> = orientations.iter().map(|o| o.yaw_deg).collect();
        if phone_parallel_ok(last.pitch_deg, last.roll_deg, cfg).is_ok()
            && accumulate_rotation(&yaws).abs() > cfg.activation_yaw_deg
        {
            return Some(GestureKind::BodyRotation);
        }
    }

    let mut poses = window.iter().filter_map(|f| match &f.payload {
        Payload::Pose(p) => Some(p.position_m),
        _ => None,
    });
    if let Some(first) = poses.next() {
        let last = poses.next_back().unwrap_or(first);
        let moved_cm = norm([last[0] - first[0], last[1] - first[1], last[2] - first[2]]) * 100.0;
        if moved_cm > cfg.activation_motion_cm {
            return Some(GestureKind::OneHand);
        }
    }
    None
}

/// Time of the Down that started contact `id`, provided the contact stayed
/// on the screen in every touch frame since.
fn held_since_down(touches: &[(u64, &[crate::model::Contact])], id: u8) -> Option<u64> {
    for &(t, contacts) in touches.iter().rev() {
        let c = contacts.iter().find(|c| c.id == id)?;
        match c.phase {
            TouchPhase::Down => return Some(t),
            TouchPhase::Move => {}
            TouchPhase::Up => return None,
        }
    }
    None
}

mod common;

use anglesizer_core::model::{EngineConfig, FeedbackKind, GestureKind, SensorFrame};
use anglesizer_core::oracle::{gen_pose_trace, gen_touch_trace, PoseTraceParams};
use anglesizer_core::teaching::{LearningModule, TeachingPhase};
use anglesizer_core::trace_io::LogRecord;
use anglesizer_core::DeviceProfile;
use anglesizer_service::{ClientMessage, ErrorCode, Reply, ServerMessage, SessionHandler};
use common::{guided_script, hello, pinch_frames, start};

fn handler() -> SessionHandler {
    SessionHandler::new(EngineConfig::default(), DeviceProfile::default())
}

fn run(h: &mut SessionHandler, script: impl IntoIterator<Item = ClientMessage>) -> Vec<Reply> {
    script.into_iter().map(|m| h.handle(m)).collect()
}

fn messages(replies: &[Reply]) -> Vec<ServerMessage> {
    replies.iter().flat_map(|r| r.messages.clone()).collect()
}

fn phases(msgs: &[ServerMessage]) -> Vec<TeachingPhase> {
    msgs.iter()
        .filter_map(|m| match m {
            ServerMessage::Phase { phase } => Some(*phase),
            _ => None,
        })
        .collect()
}

fn error_code(reply: &Reply) -> Option<ErrorCode> {
    reply.messages.iter().find_map(|m| match m {
        ServerMessage::Error { code, .. } => Some(*code),
        _ => None,
    })
}

#[test]
fn guided_session_corrects_then_completes() {
    let mut h = handler();
    let replies = run(&mut h, guided_script());
    let msgs = messages(&replies);
    assert_eq!(
        phases(&msgs),
        vec![
            TeachingPhase::Idle,
            TeachingPhase::Trying,
            TeachingPhase::Correcting,
            TeachingPhase::Trying,
            TeachingPhase::Completed
        ]
    );
    let correcting_at = msgs.iter().position(|m| *m == ServerMessage::Phase { phase: TeachingPhase::Correcting }).unwrap();
    assert!(msgs[..correcting_at]
        .iter()
        .any(|m| matches!(m, ServerMessage::Feedback { event } if event.is_vibration())));
    let last_feedback = msgs.iter().rev().find_map(|m| match m {
        ServerMessage::Feedback { event } => Some(event.kind.clone()),
        _ => None,
    });
    assert_eq!(last_feedback, Some(FeedbackKind::BeepCorrect));
    let values: Vec<f64> = msgs
        .iter()
        .filter_map(|m| match m {
            ServerMessage::Measurement { result } => Some(result.value),
            _ => None,
        })
        .collect();
    assert_eq!(values, vec![4.0, 6.0, 6.0]);

    let assessments: Vec<_> = replies
        .iter()
        .flat_map(|r| &r.records)
        .filter_map(|r| match r {
            LogRecord::Assessment(a) => Some(a),
            _ => None,
        })
        .collect();
    assert_eq!(assessments.len(), 2);
    assert!((assessments[0].relative_error - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(assessments[1].relative_error, 0.0);
    assert_eq!((assessments[1].participant.as_str(), assessments[1].day), ("p01", 1));
}

#[test]
fn assessment_session_never_vibrates() {
    let mut h = handler();
    let mut script = vec![hello(), start(LearningModule::AbilityAssessment, Some(GestureKind::TwoFingers), Some(6.0))];
    script.extend(pinch_frames(&[4.0]).into_iter().map(|frame| ClientMessage::Frame { frame }));
    let msgs = messages(&run(&mut h, script));
    assert!(!msgs.iter().any(|m| matches!(m, ServerMessage::Feedback { event } if event.is_vibration())));
    assert_eq!(phases(&msgs).last(), Some(&TeachingPhase::Completed));
    assert!(msgs.iter().any(|m| matches!(m, ServerMessage::Result { passed: false, relative_error: Some(e), .. } if (e - 1.0/3.0).abs() < 1e-12)));
}

#[test]
fn handshake_and_session_errors() {
    let mut h = handler();
    let frame = ClientMessage::Frame { frame: SensorFrame::press(0, true) };
    let r = h.handle(frame.clone());
    assert_eq!((error_code(&r), r.close), (Some(ErrorCode::HandshakeRequired), true));

    let mut h = handler();
    let r = h.handle(ClientMessage::Hello { protocol_version: "0".into() });
    assert_eq!((error_code(&r), r.close), (Some(ErrorCode::VersionMismatch), true));

    let mut h = handler();
    h.handle(hello());
    let r = h.handle(frame);
    assert_eq!((error_code(&r), r.close), (Some(ErrorCode::NoSession), false));
    let r = h.handle(ClientMessage::EndAttempt {});
    assert_eq!(error_code(&r), Some(ErrorCode::NoSession));
    let r = h.handle(start(LearningModule::GuidedLearning, Some(GestureKind::OneFinger), None));
    assert_eq!(error_code(&r), Some(ErrorCode::InvalidRequest));
    let r = h.handle(start(LearningModule::GuidedLearning, Some(GestureKind::OneFinger), Some(40.0)));
    assert_eq!(error_code(&r), Some(ErrorCode::InvalidRequest));
    let r = h.handle_text("{not json");
    assert_eq!((error_code(&r), r.close), (Some(ErrorCode::BadMessage), true));
}

#[test]
fn time_must_not_go_backwards() {
    let mut h = handler();
    run(&mut h, [hello(), start(LearningModule::GuidedLearning, Some(GestureKind::OneHand), Some(30.0))]);
    assert!(error_code(&h.handle(ClientMessage::Frame { frame: SensorFrame::press(100, true) })).is_none());
    let r = h.handle(ClientMessage::Frame { frame: SensorFrame::press(50, false) });
    assert_eq!(error_code(&r), Some(ErrorCode::NonMonotonicTime));
}

#[test]
fn end_attempt_finalizes_or_reports() {
    let mut h = handler();
    run(&mut h, [hello(), start(LearningModule::GuidedLearning, Some(GestureKind::TwoFingers), Some(5.0))]);
    let r = h.handle(ClientMessage::EndAttempt {});
    assert_eq!(error_code(&r), Some(ErrorCode::NoActivation));
    assert!(r.messages.contains(&ServerMessage::Phase { phase: TeachingPhase::Trying }));

    // a partial pinch without a stable hold, then forced to finish
    let frames = pinch_frames(&[5.0]);
    for frame in frames.iter().take(frames.len() - 20).cloned() {
        h.handle(ClientMessage::Frame { frame });
    }
    let r = h.handle(ClientMessage::EndAttempt {});
    assert!(r.messages.iter().any(|m| matches!(m, ServerMessage::Measurement { result } if (result.value - 5.0).abs() <= 0.1)));
    assert!(r.messages.contains(&ServerMessage::Phase { phase: TeachingPhase::Completed }));
}

#[test]
fn free_exploration_detects_gesture_and_sets_goal() {
    let mut h = handler();
    let first = run(&mut h, [hello(), start(LearningModule::FreeExploration, None, None)]);
    assert_eq!(phases(&messages(&first)).last(), Some(&TeachingPhase::GoalSet));

    let params = PoseTraceParams::new(35.0, 40);
    let doc = gen_pose_trace(&params, &DeviceProfile::default()).unwrap();
    let msgs = messages(&run(&mut h, doc.frames.into_iter().map(|frame| ClientMessage::Frame { frame })));
    let measured: Vec<_> = msgs
        .iter()
        .filter_map(|m| match m {
            ServerMessage::Measurement { result } => Some((result.gesture, result.value)),
            _ => None,
        })
        .collect();
    assert_eq!(measured, vec![(GestureKind::OneHand, 35.0)]);
    assert_eq!(phases(&msgs), vec![TeachingPhase::Trying]);
    assert_eq!(h.module(), Some(LearningModule::FreeExploration));
}

#[test]
fn free_exploration_recognizes_a_one_finger_hold() {
    let mut h = handler();
    run(&mut h, [hello(), start(LearningModule::FreeExploration, None, None)]);
    let doc = gen_touch_trace(3.0, &DeviceProfile::default(), false, 0.0, 0).unwrap();
    let msgs = messages(&run(&mut h, doc.frames.into_iter().map(|frame| ClientMessage::Frame { frame })));
    assert!(msgs
        .iter()
        .any(|m| matches!(m, ServerMessage::Measurement { result } if result.gesture == GestureKind::OneFinger && result.value == 3.0)));
}

#[test]
fn session_ids_count_per_connection() {
    let mut a = handler();
    let mut b = handler();
    let s = start(LearningModule::GuidedLearning, Some(GestureKind::TwoHands), Some(45.0));
    run(&mut a, [hello(), s.clone(), s.clone()]);
    run(&mut b, [hello(), s]);
    assert_eq!(a.session_id(), Some("s2"));
    assert_eq!(b.session_id(), Some("s1"));
}

#[test]
fn identical_scripts_give_identical_transcripts() {
    let transcript = || {
        let mut h = handler();
        serde_json::to_string(&messages(&run(&mut h, guided_script()))).unwrap()
    };
    assert_eq!(transcript(), transcript());
}

//! Teaching process as a pure state machine.
//!
//! A session moves through goal setting, an independent try, evaluation
//! against the tolerance and, when the try misses, a vibration-guided
//! correction that ends once the user reaches the goal band; the user then
//! tries again on their own. Ability assessment skips correction entirely.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::relative_error;
use crate::model::{EngineConfig, FeedbackEvent, FeedbackKind, GestureKind, MeasurementResult};

pub const CORRECTION_VIBRATION_MS: u64 = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TeachingError {
    #[error("goal {0} is not a positive value within the gesture range")]
    InvalidGoal(f64),
    #[error("task {0} must be > 0")]
    InvalidTask(f64),
    #[error("{event} is not allowed in phase {phase}")]
    IllegalTransition { phase: TeachingPhase, event: &'static str },
    #[error("measurement for {got} does not match session gesture {expected}")]
    GestureMismatch { expected: GestureKind, got: GestureKind },
    #[error("{tasks} tasks but {results} results")]
    LengthMismatch { tasks: usize, results: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningModule {
    GuidedLearning,
    FreeExploration,
    AbilityAssessment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeachingPhase {
    Idle,
    GoalSet,
    Trying,
    Evaluating,
    Correcting,
    Completed,
}

impl fmt::Display for TeachingPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TeachingPhase::Idle => "idle",
            TeachingPhase::GoalSet => "goal_set",
            TeachingPhase::Trying => "trying",
            TeachingPhase::Evaluating => "evaluating",
            TeachingPhase::Correcting => "correcting",
            TeachingPhase::Completed => "completed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceMode {
    /// Pass band is the gesture resolution.
    Exact,
    /// Pass band also scales with the goal.
    #[default]
    Tolerant,
}

pub fn tolerance_for(goal: f64, gesture: GestureKind, mode: ToleranceMode, cfg: &EngineConfig) -> Result<f64, TeachingError> {
    if !(goal > 0.0) || !goal.is_finite() {
        return Err(TeachingError::InvalidGoal(goal));
    }
    Ok(match mode {
        ToleranceMode::Exact => gesture.resolution(),
        ToleranceMode::Tolerant => gesture.resolution().max(cfg.tolerance_rel * goal),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttemptOutcome {
    pub passed: bool,
    pub signed_error: f64,
}

pub fn evaluate_attempt(result: f64, goal: f64, tol: f64) -> AttemptOutcome {
    let signed_error = result - goal;
    AttemptOutcome { passed: signed_error.abs() <= tol, signed_error }
}

fn direction_phrase(gesture: GestureKind, under: bool, amount: &str) -> String {
    match (gesture, under) {
        (GestureKind::OneFinger, true) => format!("slide {amount} farther"),
        (GestureKind::OneFinger, false) => format!("slide {amount} back"),
        (GestureKind::TwoFingers, true) => format!("open {amount} more"),
        (GestureKind::TwoFingers, false) => format!("close {amount}"),
        (GestureKind::OneHand, true) => format!("move {amount} farther"),
        (GestureKind::OneHand, false) => format!("move {amount} back"),
        (GestureKind::TwoHands, true) => format!("move your palm {amount} farther away"),
        (GestureKind::TwoHands, false) => format!("bring your palm {amount} closer"),
        (GestureKind::BodyRotation, true) => format!("keep turning {amount} more"),
        (GestureKind::BodyRotation, false) => format!("turn {amount} back"),
    }
}

/// Guidance for a position that may or may not be inside the goal band.
///
/// Outside the band: a vibration whose amplitude grows linearly with the
/// miss and saturates at four tolerances, plus a spoken value and direction.
/// Inside: a correct beep and a prompt to retry from memory.
pub fn correction_feedback(current: f64, goal: f64, tol: f64, gesture: GestureKind, t_ms: u64) -> Vec<FeedbackEvent> {
    let error = current - goal;
    if error.abs() <= tol {
        return vec![
            FeedbackEvent::new(t_ms, FeedbackKind::BeepCorrect),
            FeedbackEvent::speech(
                t_ms,
                format!("This is {}. Remember how it feels, then try again on your own.", gesture.speak_value(goal)),
            ),
        ];
    }
    let amplitude = (error.abs() / (4.0 * tol)).min(1.0);
    let amount = if error.abs() <= 2.0 * tol { "a little" } else { "quite a bit" };
    let text = format!(
        "{}, goal {}. {}.",
        gesture.speak_value(current),
        gesture.speak_value(goal),
        capitalize(&direction_phrase(gesture, error < 0.0, amount))
    );
    vec![
        FeedbackEvent::new(t_ms, FeedbackKind::Vibration { amplitude, duration_ms: CORRECTION_VIBRATION_MS }),
        FeedbackEvent::speech(t_ms, text),
    ]
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

pub fn instructions(gesture: GestureKind, goal: f64, cfg: &EngineConfig) -> String {
    let how = match gesture {
        GestureKind::OneFinger => format!(
            "Touch the screen with one finger and keep still for {} seconds, then slide and hold still.",
            cfg.hold_to_start_ms as f64 / 1000.0
        ),
        GestureKind::TwoFingers => "Place two fingers on the screen, spread them apart and hold still.".to_string(),
        GestureKind::OneHand => "Press the screen, move the phone in a straight line and hold still.".to_string(),
        GestureKind::TwoHands => {
            "Press the screen, show your other palm to the front camera and hold it still.".to_string()
        }
        GestureKind::BodyRotation => "Hold the phone level, press the screen, turn your body and hold still.".to_string(),
    };
    format!("Goal: {}. {how}", gesture.speak_value(goal))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub value: f64,
    pub signed_error: f64,
    pub passed: bool,
    pub t_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeachingSession {
    pub id: String,
    pub module: LearningModule,
    pub gesture: GestureKind,
    pub goal: f64,
    pub mode: ToleranceMode,
    pub tolerance: f64,
    pub phase: TeachingPhase,
    pub attempts: Vec<Attempt>,
    hold_to_start_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    StartGoal { t_ms: u64 },
    Measurement { result: MeasurementResult },
    Tick { t_ms: u64 },
}

impl SessionEvent {
    fn name(&self) -> &'static str {
        match self {
            SessionEvent::StartGoal { .. } => "start_goal",
            SessionEvent::Measurement { .. } => "measurement",
            SessionEvent::Tick { .. } => "tick",
        }
    }
}

impl TeachingSession {
    pub fn new(
        id: impl Into<String>,
        module: LearningModule,
        gesture: GestureKind,
        goal: f64,
        mode: ToleranceMode,
        cfg: &EngineConfig,
    ) -> Result<Self, TeachingError> {
        let (lo, hi) = gesture.range();
        if !(lo..=hi).contains(&goal) {
            return Err(TeachingError::InvalidGoal(goal));
        }
        let tolerance = tolerance_for(goal, gesture, mode, cfg)?;
        Ok(Self {
            id: id.into(),
            module,
            gesture,
            goal,
            mode,
            tolerance,
            phase: TeachingPhase::Idle,
            attempts: Vec::new(),
            hold_to_start_ms: cfg.hold_to_start_ms,
        })
    }

    /// Record for the most recent attempt.
    pub fn assessment_record(&self, participant: &str, day: u32) -> Option<AssessmentRecord> {
        let last = self.attempts.last()?;
        Some(AssessmentRecord {
            participant: participant.to_string(),
            day,
            gesture: self.gesture,
            task: self.goal,
            result: last.value,
            relative_error: relative_error(last.value, self.goal).ok()?,
            t_ms: last.t_ms,
        })
    }
}

/// Pure transition: returns the next session state and the feedback it emits.
pub fn session_step(
    session: &TeachingSession,
    event: &SessionEvent,
) -> Result<(TeachingSession, Vec<FeedbackEvent>), TeachingError> {
    let illegal = || TeachingError::IllegalTransition { phase: session.phase, event: event.name() };
    let mut next = session.clone();
    let mut events = Vec::new();
    match (session.phase, event) {
        (_, SessionEvent::Tick { .. }) => {}
        (TeachingPhase::Idle, SessionEvent::StartGoal { t_ms }) => {
            next.phase = TeachingPhase::GoalSet;
            let cfg = EngineConfig { hold_to_start_ms: session.hold_to_start_ms, ..EngineConfig::default() };
            events.push(FeedbackEvent::speech(*t_ms, instructions(session.gesture, session.goal, &cfg)));
            next.phase = TeachingPhase::Trying;
        }
        (TeachingPhase::Trying, SessionEvent::Measurement { result }) => {
            if result.gesture != session.gesture {
                return Err(TeachingError::GestureMismatch { expected: session.gesture, got: result.gesture });
            }
            next.phase = TeachingPhase::Evaluating;
            let t = result.ended_ms;
            let outcome = evaluate_attempt(result.value, session.goal, session.tolerance);
            next.attempts.push(Attempt {
                value: result.value,
                signed_error: outcome.signed_error,
                passed: outcome.passed,
                t_ms: t,
            });
            let said = session.gesture.speak_value(result.value);
            if outcome.passed {
                next.phase = TeachingPhase::Completed;
                events.push(FeedbackEvent::speech(t, format!("{said}. Well done.")));
                events.push(FeedbackEvent::new(t, FeedbackKind::BeepCorrect));
            } else if session.module == LearningModule::AbilityAssessment {
                next.phase = TeachingPhase::Completed;
                events.push(FeedbackEvent::speech(t, format!("{said}.")));
                events.push(FeedbackEvent::new(t, FeedbackKind::BeepError));
            } else {
                next.phase = TeachingPhase::Correcting;
                events.extend(correction_feedback(result.value, session.goal, session.tolerance, session.gesture, t));
            }
        }
        (TeachingPhase::Correcting, SessionEvent::Measurement { result }) => {
            if result.gesture != session.gesture {
                return Err(TeachingError::GestureMismatch { expected: session.gesture, got: result.gesture });
            }
            let outcome = evaluate_attempt(result.value, session.goal, session.tolerance);
            if outcome.passed {
                next.phase = TeachingPhase::Trying;
            }
            events.extend(correction_feedback(
                result.value,
                session.goal,
                session.tolerance,
                session.gesture,
                result.ended_ms,
            ));
        }
        _ => return Err(illegal()),
    }
    Ok((next, events))
}

/// Starts a free-exploration session whose goal is the value just measured.
pub fn run_free_exploration(
    id: impl Into<String>,
    measurement: &MeasurementResult,
    mode: ToleranceMode,
    cfg: &EngineConfig,
) -> Result<(TeachingSession, Vec<FeedbackEvent>), TeachingError> {
    let mut session =
        TeachingSession::new(id, LearningModule::FreeExploration, measurement.gesture, measurement.value, mode, cfg)?;
    session.phase = TeachingPhase::Trying;
    let text = format!("{}. Now make it again.", measurement.gesture.speak_value(measurement.value));
    Ok((session, vec![FeedbackEvent::speech(measurement.ended_ms, text)]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentRecord {
    pub participant: String,
    pub day: u32,
    pub gesture: GestureKind,
    pub task: f64,
    pub result: f64,
    pub relative_error: f64,
    pub t_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub gesture: GestureKind,
    pub value: f64,
}

const LEARNING_TASKS_JSON: &str = include_str!("../data/learning_tasks.json");

pub fn parse_tasks(json: &str) -> Result<Vec<Task>, String> {
    let tasks: Vec<Task> = serde_json::from_str(json).map_err(|e| e.to_string())?;
    for (i, t) in tasks.iter().enumerate() {
        let (lo, hi) = t.gesture.range();
        if !(t.value > 0.0 && t.value >= lo && t.value <= hi) {
            return Err(format!("task {}: {} outside ({lo}, {hi}]", i + 1, t.value));
        }
    }
    Ok(tasks)
}

/// The twenty default assessment tasks, four per gesture.
pub fn learning_tasks() -> Vec<Task> {
    parse_tasks(LEARNING_TASKS_JSON).expect("bundled task list is valid")
}

/// Scores index-aligned task/measurement pairs. No corrective feedback is produced.
pub fn run_assessment(
    tasks: &[Task],
    measurements: &[MeasurementResult],
    participant: &str,
    day: u32,
) -> Result<Vec<AssessmentRecord>, TeachingError> {
    if tasks.len() != measurements.len() {
        return Err(TeachingError::LengthMismatch { tasks: tasks.len(), results: measurements.len() });
    }
    tasks
        .iter()
        .zip(measurements)
        .map(|(task, m)| {
            if m.gesture != task.gesture {
                return Err(TeachingError::GestureMismatch { expected: task.gesture, got: m.gesture });
            }
            let relative_error = relative_error(m.value, task.value).map_err(|_| TeachingError::InvalidTask(task.value))?;
            Ok(AssessmentRecord {
                participant: participant.to_string(),
                day,
                gesture: task.gesture,
                task: task.value,
                result: m.value,
                relative_error,
                t_ms: m.ended_ms,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> EngineConfig {
        EngineConfig::default()
    }

    fn result(gesture: GestureKind, value: f64, t: u64) -> MeasurementResult {
        MeasurementResult {
            gesture,
            value,
            raw_value: value,
            started_ms: t.saturating_sub(500),
            ended_ms: t,
            frames_processed: 20,
            warnings: Vec::new(),
            signed_rotation_deg: None,
        }
    }

    fn measured(gesture: GestureKind, value: f64, t: u64) -> SessionEvent {
        SessionEvent::Measurement { result: result(gesture, value, t) }
    }

    #[test]
    fn tolerance_examples() {
        let c = cfg();
        assert_eq!(tolerance_for(4.0, GestureKind::OneFinger, ToleranceMode::Exact, &c).unwrap(), 0.1);
        assert_eq!(tolerance_for(80.0, GestureKind::TwoHands, ToleranceMode::Tolerant, &c).unwrap(), 4.0);
        assert!((tolerance_for(30.0, GestureKind::BodyRotation, ToleranceMode::Tolerant, &c).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(tolerance_for(10.0, GestureKind::OneHand, ToleranceMode::Tolerant, &c).unwrap(), 1.0);
        assert!(matches!(tolerance_for(0.0, GestureKind::OneHand, ToleranceMode::Exact, &c), Err(TeachingError::InvalidGoal(_))));
    }

    #[test]
    fn evaluate_examples() {
        let o = evaluate_attempt(30.9, 30.0, 1.0);
        assert!(o.passed && (o.signed_error - 0.9).abs() < 1e-12);
        assert_eq!(evaluate_attempt(7.0, 7.0, 0.1), AttemptOutcome { passed: true, signed_error: 0.0 });
        let o = evaluate_attempt(3.5, 3.0, 0.15);
        assert!(!o.passed && (o.signed_error - 0.5).abs() < 1e-12);
    }

    #[test]
    fn correction_examples() {
        let ev = correction_feedback(2.0, 6.0, 0.5, GestureKind::TwoFingers, 7);
        assert_eq!(ev[0].kind, FeedbackKind::Vibration { amplitude: 1.0, duration_ms: 200 });
        let FeedbackKind::Speech { text } = &ev[1].kind else { panic!() };
        assert!(text.contains('6') && text.contains("Open"), "{text}");

        let ev = correction_feedback(6.4, 6.0, 0.5, GestureKind::TwoFingers, 7);
        assert_eq!(ev[0].kind, FeedbackKind::BeepCorrect);
        assert!(ev.iter().all(|e| !e.is_vibration()));

        let amp = |cur| match correction_feedback(cur, 6.0, 0.5, GestureKind::OneHand, 0)[0].kind {
            FeedbackKind::Vibration { amplitude, .. } => amplitude,
            _ => panic!(),
        };
        assert!((amp(7.6) - 0.8).abs() < 1e-12);
        assert!((amp(6.8) - 0.4).abs() < 1e-12);
        assert!((amp(7.6) / amp(6.8) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn guided_learning_scenario() {
        let c = cfg();
        let g = GestureKind::TwoFingers;
        let s = TeachingSession::new("s1", LearningModule::GuidedLearning, g, 6.0, ToleranceMode::Tolerant, &c).unwrap();
        let mut all = Vec::new();
        let mut phases = Vec::new();
        let mut s = s;
        for ev in [
            SessionEvent::StartGoal { t_ms: 0 },
            measured(g, 4.0, 1000),
            measured(g, 6.1, 2000),
            measured(g, 6.1, 3000),
        ] {
            let (next, out) = session_step(&s, &ev).unwrap();
            s = next;
            phases.push(s.phase);
            all.extend(out);
        }
        assert_eq!(
            phases,
            vec![TeachingPhase::Trying, TeachingPhase::Correcting, TeachingPhase::Trying, TeachingPhase::Completed]
        );
        assert!(all.iter().any(FeedbackEvent::is_vibration));
        assert_eq!(all.last().unwrap().kind, FeedbackKind::BeepCorrect);
        assert_eq!(s.attempts.len(), 2);
        assert!(s.attempts.last().unwrap().passed);
    }

    #[test]
    fn assessment_has_no_correction() {
        let c = cfg();
        let g = GestureKind::OneFinger;
        let s = TeachingSession::new("a", LearningModule::AbilityAssessment, g, 6.0, ToleranceMode::Tolerant, &c).unwrap();
        let (s, e1) = session_step(&s, &SessionEvent::StartGoal { t_ms: 0 }).unwrap();
        let (s, e2) = session_step(&s, &measured(g, 4.0, 10)).unwrap();
        assert_eq!(s.phase, TeachingPhase::Completed);
        assert!(e1.iter().chain(&e2).all(|e| !e.is_vibration()));
        let rec = s.assessment_record("p1", 2).unwrap();
        assert!((rec.relative_error - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn illegal_transitions() {
        let c = cfg();
        let g = GestureKind::OneHand;
        let s = TeachingSession::new("x", LearningModule::GuidedLearning, g, 30.0, ToleranceMode::Exact, &c).unwrap();
        assert!(matches!(session_step(&s, &measured(g, 30.0, 1)), Err(TeachingError::IllegalTransition { .. })));
        let (s, _) = session_step(&s, &SessionEvent::StartGoal { t_ms: 0 }).unwrap();
        assert!(session_step(&s, &SessionEvent::StartGoal { t_ms: 1 }).is_err());
        assert!(matches!(
            session_step(&s, &measured(GestureKind::TwoHands, 30.0, 1)),
            Err(TeachingError::GestureMismatch { .. })
        ));
        let (s, _) = session_step(&s, &measured(g, 30.0, 2)).unwrap();
        assert_eq!(s.phase, TeachingPhase::Completed);
        assert!(session_step(&s, &measured(g, 30.0, 3)).is_err());
        assert_eq!(session_step(&s, &SessionEvent::Tick { t_ms: 4 }).unwrap().0, s);
    }

    #[test]
    fn goal_outside_range_rejected() {
        let c = cfg();
        assert!(TeachingSession::new("x", LearningModule::GuidedLearning, GestureKind::OneFinger, 13.0, ToleranceMode::Exact, &c).is_err());
        assert!(TeachingSession::new("x", LearningModule::GuidedLearning, GestureKind::OneFinger, 0.0, ToleranceMode::Exact, &c).is_err());
    }

    #[test]
    fn free_exploration_goal_is_measured_value() {
        let c = cfg();
        for (g, v) in [(GestureKind::OneHand, 35.0), (GestureKind::BodyRotation, 120.0), (GestureKind::OneHand, 120.0)] {
            let (s, events) = run_free_exploration("f", &result(g, v, 100), ToleranceMode::Tolerant, &c).unwrap();
            assert_eq!((s.goal, s.gesture, s.phase), (v, g, TeachingPhase::Trying));
            assert_eq!(s.module, LearningModule::FreeExploration);
            let FeedbackKind::Speech { text } = &events[0].kind else { panic!() };
            assert!(text.starts_with(&format!("{v:.0}")), "{text}");
        }
    }

    #[test]
    fn assessment_records() {
        let tasks = learning_tasks();
        assert_eq!(tasks.len(), 20);
        let perfect: Vec<_> = tasks.iter().map(|t| result(t.gesture, t.value, 1)).collect();
        let recs = run_assessment(&tasks, &perfect, "p", 0).unwrap();
        assert_eq!(recs.len(), 20);
        assert!(recs.iter().all(|r| r.relative_error == 0.0));

        let one = [Task { gesture: GestureKind::OneFinger, value: 1.0 }];
        let r = run_assessment(&one, &[result(GestureKind::OneFinger, 1.2, 1)], "p", 0).unwrap();
        assert!((r[0].relative_error - 0.2).abs() < 1e-12);
        let deg = [Task { gesture: GestureKind::BodyRotation, value: 45.0 }];
        let r = run_assessment(&deg, &[result(GestureKind::BodyRotation, 43.7, 1)], "p", 0).unwrap();
        assert!((r[0].relative_error - 0.0289).abs() < 5e-5);

        assert!(matches!(run_assessment(&tasks, &perfect[..3], "p", 0), Err(TeachingError::LengthMismatch { .. })));
    }

    #[test]
    fn bundled_tasks_match_table() {
        let by_gesture = |g| learning_tasks().into_iter().filter(|t| t.gesture == g).map(|t| t.value).collect::<Vec<_>>();
        assert_eq!(by_gesture(GestureKind::OneFinger), vec![1.0, 2.0, 4.0, 8.0]);
        assert_eq!(by_gesture(GestureKind::TwoFingers), vec![3.0, 5.0, 6.0, 7.0]);
        assert_eq!(by_gesture(GestureKind::OneHand), vec![25.0, 35.0, 70.0, 100.0]);
        assert_eq!(by_gesture(GestureKind::TwoHands), vec![45.0, 65.0, 85.0, 100.0]);
        assert_eq!(by_gesture(GestureKind::BodyRotation), vec![30.0, 45.0, 60.0, 120.0]);
    }

    proptest! {
        #[test]
        fn tolerance_monotone(a in 0.01f64..120.0, b in 0.01f64..120.0) {
            let c = cfg();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for g in [GestureKind::OneHand, GestureKind::TwoHands] {
                prop_assert!(tolerance_for(lo, g, ToleranceMode::Tolerant, &c).unwrap() <= tolerance_for(hi, g, ToleranceMode::Tolerant, &c).unwrap());
                prop_assert_eq!(tolerance_for(lo, g, ToleranceMode::Exact, &c).unwrap(), tolerance_for(hi, g, ToleranceMode::Exact, &c).unwrap());
            }
        }

        #[test]
        fn pass_band_symmetric(goal in 1.0f64..100.0, d in 0.0f64..10.0, tol in 0.1f64..5.0) {
            prop_assert_eq!(evaluate_attempt(goal + d, goal, tol).passed, evaluate_attempt(goal - d, goal, tol).passed);
        }
    }
}

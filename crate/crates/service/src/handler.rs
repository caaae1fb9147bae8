//! Per-connection session logic, independent of the transport.

use std::collections::VecDeque;

use anglesizer_core::activation::detect_activation;
use anglesizer_core::engine::{EngineError, Pipeline};
use anglesizer_core::model::{
    DeviceProfile, EngineConfig, FeedbackEvent, GestureKind, MeasurementResult, Payload, SensorFrame,
};
use anglesizer_core::teaching::{
    run_free_exploration, session_step, LearningModule, SessionEvent, TeachingPhase, TeachingSession, ToleranceMode,
};
use anglesizer_core::trace_io::{FeedbackEnvelope, LogRecord};

use crate::protocol::{ClientMessage, ErrorCode, ServerMessage, PROTOCOL_VERSION};

const EXPLORE_INSTRUCTIONS: &str =
    "Make any gesture and hold it still. You will hear its size, then try to make it again.";

/// Extra history kept beyond the one-finger hold when guessing the gesture.
const ACTIVATION_MARGIN_MS: u64 = 2000;

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Reply {
    pub messages: Vec<ServerMessage>,
    pub records: Vec<LogRecord>,
    /// The connection must be closed after sending `messages`.
    pub close: bool,
}

impl Reply {
    fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Reply { messages: vec![ServerMessage::error(code, message)], ..Reply::default() }
    }

    fn fatal(code: ErrorCode, message: impl Into<String>) -> Self {
        Reply { close: true, ..Reply::error(code, message) }
    }
}

#[derive(Debug)]
struct Active {
    id: String,
    module: LearningModule,
    mode: ToleranceMode,
    participant: String,
    day: u32,
    profile: DeviceProfile,
    /// `None` while free exploration has not measured a goal yet.
    teaching: Option<TeachingSession>,
    /// `None` while free exploration has not recognized a gesture yet.
    pipeline: Option<Pipeline>,
    window: VecDeque<SensorFrame>,
    carried_press: Option<SensorFrame>,
    last_t: Option<u64>,
}

impl Active {
    fn phase(&self) -> TeachingPhase {
        self.teaching.as_ref().map_or(TeachingPhase::GoalSet, |s| s.phase)
    }
}

/// Turns client messages into server messages and log records. Holds no
/// clocks or I/O, so identical inputs give identical transcripts.
#[derive(Debug)]
pub struct SessionHandler {
    cfg: EngineConfig,
    profile: DeviceProfile,
    greeted: bool,
    sessions_started: u64,
    active: Option<Active>,
}

impl SessionHandler {
    pub fn new(cfg: EngineConfig, profile: DeviceProfile) -> Self {
        Self { cfg, profile, greeted: false, sessions_started: 0, active: None }
    }

    pub fn handle_text(&mut self, text: &str) -> Reply {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(msg) => self.handle(msg),
            Err(e) if !self.greeted => Reply::fatal(ErrorCode::HandshakeRequired, format!("expected hello: {e}")),
            Err(e) => Reply::fatal(ErrorCode::BadMessage, e.to_string()),
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Reply {
        match msg {
            ClientMessage::Hello { protocol_version } => self.hello(&protocol_version),
            _ if !self.greeted => Reply::fatal(ErrorCode::HandshakeRequired, "send hello first"),
            ClientMessage::StartSession { module, gesture, goal, mode, participant, day, profile } => {
                self.start(module, gesture, goal, mode, participant, day, profile)
            }
            ClientMessage::Frame { frame } => self.frame(frame),
            ClientMessage::EndAttempt {} => self.end_attempt(),
        }
    }

    fn hello(&mut self, version: &str) -> Reply {
        if version != PROTOCOL_VERSION {
            return Reply::fatal(
                ErrorCode::VersionMismatch,
                format!("server speaks protocol {PROTOCOL_VERSION}, client sent {version}"),
            );
        }
        self.greeted = true;
        let phase = self.active.as_ref().map_or(TeachingPhase::Idle, Active::phase);
        Reply { messages: vec![ServerMessage::Phase { phase }], ..Reply::default() }
    }

    #[allow(clippy::too_many_arguments)]
    fn start(
        &mut self,
        module: LearningModule,
        gesture: Option<GestureKind>,
        goal: Option<f64>,
        mode: ToleranceMode,
        participant: Option<String>,
        day: Option<u32>,
        profile: Option<DeviceProfile>,
    ) -> Reply {
        let profile = profile.unwrap_or_else(|| self.profile.clone());
        if let Err(e) = profile.validate() {
            return Reply::error(ErrorCode::InvalidRequest, e.to_string());
        }
        let id = format!("s{}", self.sessions_started + 1);
        let mut active = Active {
            id: id.clone(),
            module,
            mode,
            participant: participant.unwrap_or_else(|| "anonymous".to_string()),
            day: day.unwrap_or(0),
            profile,
            teaching: None,
            pipeline: None,
            window: VecDeque::new(),
            carried_press: None,
            last_t: None,
        };
        let mut reply = Reply::default();
        match module {
            LearningModule::FreeExploration => {
                if goal.is_some() {
                    return Reply::error(ErrorCode::InvalidRequest, "free exploration takes its goal from a measurement");
                }
                if let Some(g) = gesture {
                    active.pipeline = Some(self.pipeline(g, &active.profile));
                }
                let event = FeedbackEvent::speech(0, EXPLORE_INSTRUCTIONS);
                reply.messages.push(ServerMessage::SessionStarted { id, instructions: EXPLORE_INSTRUCTIONS.into() });
                self.feedback(&active.id, vec![event], &mut reply);
            }
            _ => {
                let (Some(g), Some(goal)) = (gesture, goal) else {
                    return Reply::error(ErrorCode::InvalidRequest, "this module needs a gesture and a goal");
                };
                let session = match TeachingSession::new(id.clone(), module, g, goal, mode, &self.cfg)
                    .and_then(|s| session_step(&s, &SessionEvent::StartGoal { t_ms: 0 }))
                {
                    Ok(started) => started,
                    Err(e) => return Reply::error(ErrorCode::InvalidRequest, e.to_string()),
                };
                let (session, events) = session;
                let instructions = events
                    .iter()
                    .find_map(|e| match &e.kind {
                        anglesizer_core::FeedbackKind::Speech { text } => Some(text.clone()),
                        _ => None,
                    })
                    .unwrap_or_default();
                active.pipeline = Some(self.pipeline(g, &active.profile));
                active.teaching = Some(session);
                reply.messages.push(ServerMessage::SessionStarted { id, instructions });
                self.feedback(&active.id, events, &mut reply);
            }
        }
        self.sessions_started += 1;
        reply.messages.push(ServerMessage::Phase { phase: active.phase() });
        self.active = Some(active);
        reply
    }

    fn pipeline(&self, gesture: GestureKind, profile: &DeviceProfile) -> Pipeline {
        Pipeline::new(gesture, profile, &self.cfg).expect("profile and config validated").quiet()
    }

    fn feedback(&self, session_id: &str, events: Vec<FeedbackEvent>, reply: &mut Reply) {
        for event in events {
            reply.records.push(LogRecord::Feedback(FeedbackEnvelope { session_id: session_id.to_string(), event: event.clone() }));
            reply.messages.push(ServerMessage::Feedback { event });
        }
    }

    fn frame(&mut self, frame: SensorFrame) -> Reply {
        let Some(active) = self.active.as_mut() else {
            return Reply::error(ErrorCode::NoSession, "start a session before sending frames");
        };
        if let Some(last) = active.last_t.filter(|&last| frame.t_ms < last) {
            return Reply::error(ErrorCode::NonMonotonicTime, format!("t_ms {} after {last}", frame.t_ms));
        }
        active.last_t = Some(frame.t_ms);
        let mut reply = Reply::default();

        let mut events = Vec::new();
        match active.pipeline.as_mut() {
            Some(p) => events.extend(p.push(&frame)),
            None => {
                let horizon = self.cfg.hold_to_start_ms + ACTIVATION_MARGIN_MS;
                active.window.push_back(frame.clone());
                while active.window.front().is_some_and(|f| frame.t_ms - f.t_ms > horizon) {
                    let old = active.window.pop_front().expect("non-empty");
                    if matches!(old.payload, Payload::Press(_)) {
                        active.carried_press = Some(old);
                    }
                }
                let history: Vec<SensorFrame> =
                    active.carried_press.iter().cloned().chain(active.window.iter().cloned()).collect();
                if let Some(g) = detect_activation(&history, &self.cfg) {
                    let mut p = Pipeline::new(g, &active.profile, &self.cfg).expect("validated").quiet();
                    for f in &history {
                        events.extend(p.push(f));
                        if p.result().is_some() {
                            break;
                        }
                    }
                    active.pipeline = Some(p);
                    active.window.clear();
                    active.carried_press = None;
                }
            }
        }
        let id = active.id.clone();
        self.feedback(&id, events, &mut reply);
        let result = self.active.as_ref().and_then(|a| a.pipeline.as_ref()).and_then(|p| p.result().cloned());
        if let Some(result) = result {
            self.measured(result, &mut reply);
        }
        reply
    }

    fn end_attempt(&mut self) -> Reply {
        let cfg = self.cfg.clone();
        let Some(active) = self.active.as_mut() else {
            return Reply::error(ErrorCode::NoSession, "no session to end an attempt in");
        };
        let t = active.last_t.unwrap_or(0);
        let Some(pipeline) = active.pipeline.as_mut() else {
            let mut reply = Reply::error(ErrorCode::NoActivation, "no gesture recognized yet");
            reply.messages.push(ServerMessage::Phase { phase: active.phase() });
            return reply;
        };
        match pipeline.finish(t) {
            Ok((result, events)) => {
                let mut reply = Reply::default();
                let id = active.id.clone();
                self.feedback(&id, events, &mut reply);
                self.measured(result, &mut reply);
                reply
            }
            Err(e) => {
                let code = match e {
                    EngineError::NoActivation(_) => ErrorCode::NoActivation,
                    _ => ErrorCode::NeverStable,
                };
                *pipeline = Pipeline::new(pipeline.gesture(), &active.profile, &cfg).expect("validated").quiet();
                let mut reply = Reply::error(code, e.to_string());
                reply.messages.push(ServerMessage::Phase { phase: active.phase() });
                reply
            }
        }
    }

    /// Feeds a finished measurement into the teaching session.
    fn measured(&mut self, result: MeasurementResult, reply: &mut Reply) {
        let cfg = self.cfg.clone();
        let active = self.active.as_mut().expect("measurement implies a session");
        reply.messages.push(ServerMessage::Measurement { result: result.clone() });
        let next_pipeline = Pipeline::new(result.gesture, &active.profile, &cfg).expect("validated").quiet().after_release();

        let (events, outcome) = match active.teaching.take() {
            None => match run_free_exploration(active.id.clone(), &result, active.mode, &cfg) {
                Ok((session, events)) => {
                    active.teaching = Some(session);
                    (events, None)
                }
                Err(e) => {
                    active.pipeline = Some(next_pipeline);
                    reply.messages.push(ServerMessage::error(ErrorCode::InvalidRequest, e.to_string()));
                    reply.messages.push(ServerMessage::Phase { phase: active.phase() });
                    return;
                }
            },
            Some(session) => match session_step(&session, &SessionEvent::Measurement { result: result.clone() }) {
                Ok((next, events)) => {
                    let attempted = next.attempts.len() > session.attempts.len();
                    let outcome = attempted.then(|| next.attempts.last().cloned()).flatten();
                    let record = attempted.then(|| next.assessment_record(&active.participant, active.day)).flatten();
                    active.teaching = Some(next);
                    if let Some(r) = record {
                        reply.records.push(LogRecord::Assessment(r));
                    }
                    (events, outcome)
                }
                Err(e) => {
                    active.teaching = Some(session);
                    active.pipeline = Some(next_pipeline);
                    reply.messages.push(ServerMessage::error(ErrorCode::IllegalTransition, e.to_string()));
                    reply.messages.push(ServerMessage::Phase { phase: active.phase() });
                    return;
                }
            },
        };
        active.pipeline = Some(next_pipeline);
        let id = active.id.clone();
        let goal = active.teaching.as_ref().map(|s| s.goal);
        let phase = active.phase();
        self.feedback(&id, events, reply);
        if let (Some(attempt), Some(goal)) = (outcome, goal) {
            reply.messages.push(ServerMessage::Result {
                passed: attempt.passed,
                value: attempt.value,
                goal,
                signed_error: attempt.signed_error,
                relative_error: anglesizer_core::analytics::relative_error(attempt.value, goal).ok(),
            });
        }
        reply.messages.push(ServerMessage::Phase { phase });
    }

    pub fn session_id(&self) -> Option<&str> {
        self.active.as_ref().map(|a| a.id.as_str())
    }

    pub fn phase(&self) -> TeachingPhase {
        self.active.as_ref().map_or(TeachingPhase::Idle, Active::phase)
    }

    pub fn module(&self) -> Option<LearningModule> {
        self.active.as_ref().map(|a| a.module)
    }
}

//! Frame-by-frame measurement pipeline.
//!
//! Each frame goes through validity checking, a per-gesture estimate and a
//! stability check. Once the last `stability_window_frames` estimates sit
//! inside the gesture's band the value is finalized from the mean of the last
//! `finalize_k_frames` estimates, rounded, clipped and announced.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    round_to_resolution, validate_range, Contact, DeviceProfile, EngineConfig, FeedbackEvent, FeedbackKind,
    GestureKind, MeasurementResult, ModelError, Payload, SensorFrame, TouchPhase, Warning, WarningCode,
};
use crate::trace_io::TraceDocument;

pub const CM_PER_INCH: f64 = 2.54;

pub type Vec3 = [f64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid observation: palm width {0} px")]
    InvalidObservation(f64),
    #[error("need {need} estimates to finalize, have {have}")]
    InsufficientHistory { have: usize, need: usize },
    #[error("gesture never activated ({} frames)", .0.frames_processed)]
    NoActivation(Diagnostics),
    #[error("trace ended before the gesture was stable ({} estimates)", .0.estimates)]
    NeverStable(Diagnostics),
}

impl From<ModelError> for EngineError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidProfile(m) => EngineError::InvalidProfile(m),
            other => EngineError::InvalidConfig(other.to_string()),
        }
    }
}

/// Partial state reported when a run ends without a measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub gesture: GestureKind,
    pub frames_processed: usize,
    pub estimates: usize,
    pub last_estimate: Option<f64>,
    pub accumulated_yaw_deg: Option<f64>,
    pub warnings: Vec<Warning>,
}

pub fn px_to_cm(px: f64, dpi: f64) -> Result<f64, EngineError> {
    if !(dpi > 0.0) {
        return Err(EngineError::InvalidProfile(format!("dpi must be > 0, got {dpi}")));
    }
    Ok(px / dpi * CM_PER_INCH)
}

/// Physical distance between two screen points, converting each axis with its own DPI.
pub fn touch_span_cm(a: (f64, f64), b: (f64, f64), profile: &DeviceProfile) -> f64 {
    let dx = (b.0 - a.0) / profile.dpi_x * CM_PER_INCH;
    let dy = (b.1 - a.1) / profile.dpi_y * CM_PER_INCH;
    dx.hypot(dy)
}

pub fn norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Shrinks `delta` to length `theta` if it is longer, keeping its direction.
pub fn clamp_delta(delta: Vec3, theta: f64) -> Vec3 {
    let len = norm(delta);
    if len <= theta {
        delta
    } else {
        let s = theta / len;
        [delta[0] * s, delta[1] * s, delta[2] * s]
    }
}

/// Incremental pose reconstruction with per-frame change clamping.
#[derive(Debug, Clone)]
pub struct OneHandTracker {
    theta: f64,
    origin: Vec3,
    last_raw: Vec3,
    reconstructed: Vec3,
}

impl OneHandTracker {
    pub fn new(origin: Vec3, theta: f64) -> Self {
        Self { theta, origin, last_raw: origin, reconstructed: origin }
    }

    /// Feeds the next raw position; returns the displacement estimate in cm
    /// and whether the change had to be clamped.
    pub fn step(&mut self, raw: Vec3) -> (f64, bool) {
        let delta = sub(raw, self.last_raw);
        let clamped = clamp_delta(delta, self.theta);
        let fired = norm(delta) > self.theta;
        self.last_raw = raw;
        self.reconstructed = add(self.reconstructed, clamped);
        (self.estimate_cm(), fired)
    }

    pub fn estimate_cm(&self) -> f64 {
        norm(sub(self.reconstructed, self.origin)) * 100.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneHandTrack {
    /// Per-frame displacement estimate in cm, first entry 0.
    pub estimates_cm: Vec<f64>,
    /// Indices of frames whose change was clamped.
    pub clamped_frames: Vec<usize>,
}

pub fn one_hand_track(positions: &[Vec3], theta: f64) -> OneHandTrack {
    let Some(&first) = positions.first() else {
        return OneHandTrack { estimates_cm: Vec::new(), clamped_frames: Vec::new() };
    };
    let mut tracker = OneHandTracker::new(first, theta);
    let mut track = OneHandTrack { estimates_cm: vec![0.0], clamped_frames: Vec::new() };
    for (i, &p) in positions.iter().enumerate().skip(1) {
        let (est, fired) = tracker.step(p);
        track.estimates_cm.push(est);
        if fired {
            track.clamped_frames.push(i);
        }
    }
    track
}

/// Pinhole ranging from the palm's apparent width.
pub fn palm_distance_cm(width_px: f64, profile: &DeviceProfile) -> Result<f64, EngineError> {
    if !(width_px > 0.0) || !width_px.is_finite() {
        return Err(EngineError::InvalidObservation(width_px));
    }
    Ok(profile.focal_px * profile.palm_width_cm / width_px)
}

/// Palm tilt check from knuckle depths relative to the wrist. The spread of
/// the relative depths, normalized by the palm's pixel width, must not exceed
/// `palm_arch_spread_max` (inclusive).
pub fn palm_parallelism_ok(
    arch_depths: &[f64],
    wrist_depth: f64,
    width_px: f64,
    cfg: &EngineConfig,
) -> Result<(), WarningCode> {
    let relative = arch_depths.iter().map(|d| d - wrist_depth);
    let (lo, hi) = relative.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    let spread = (hi - lo) / width_px;
    if spread <= cfg.palm_arch_spread_max {
        Ok(())
    } else {
        Err(WarningCode::PalmNotParallel)
    }
}

pub fn phone_parallel_ok(pitch_deg: f64, roll_deg: f64, cfg: &EngineConfig) -> Result<(), WarningCode> {
    if pitch_deg.abs().max(roll_deg.abs()) <= cfg.parallel_max_deg {
        Ok(())
    } else {
        Err(WarningCode::PhoneNotParallel)
    }
}

/// Shortest signed difference from `prev` to `cur`, in (-180, 180].
pub fn wrap_delta(prev_yaw_deg: f64, cur_yaw_deg: f64) -> f64 {
    let d = (cur_yaw_deg - prev_yaw_deg).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

pub fn accumulate_rotation(yaw_samples: &[f64]) -> f64 {
    yaw_samples.windows(2).map(|w| wrap_delta(w[0], w[1])).sum()
}

pub fn stability_reached(recent: &[f64], gesture: GestureKind, cfg: &EngineConfig) -> bool {
    let window = cfg.stability_window_frames;
    if recent.len() < window {
        return false;
    }
    let tail = &recent[recent.len() - window..];
    let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo <= cfg.stability_eps.for_gesture(gesture)
}

/// Mean of the last `finalize_k_frames` estimates.
pub fn finalize_value(recent: &[f64], cfg: &EngineConfig) -> Result<f64, EngineError> {
    let k = cfg.finalize_k_frames;
    if recent.len() < k || k == 0 {
        return Err(EngineError::InsufficientHistory { have: recent.len(), need: k });
    }
    let tail = &recent[recent.len() - k..];
    // a constant series must come back exactly
    if tail.iter().all(|&v| v == tail[0]) {
        return Ok(tail[0]);
    }
    Ok(tail.iter().sum::<f64>() / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelinePhase {
    Armed,
    Running,
    Stable,
}

#[derive(Debug, Clone)]
enum GestureState {
    OneFinger { down: Option<(u8, u64, (f64, f64))>, anchor: Option<(u8, (f64, f64))>, lifted: bool },
    TwoFingers,
    OneHand { pressed: bool, tracker: Option<OneHandTracker> },
    TwoHands { pressed: bool, palm_visible: bool, tilted: bool },
    Rotation { pressed: bool, last_yaw: Option<f64>, tilted: bool },
}

impl GestureState {
    fn new(gesture: GestureKind) -> Self {
        match gesture {
            GestureKind::OneFinger => GestureState::OneFinger { down: None, anchor: None, lifted: false },
            GestureKind::TwoFingers => GestureState::TwoFingers,
            GestureKind::OneHand => GestureState::OneHand { pressed: false, tracker: None },
            GestureKind::TwoHands => GestureState::TwoHands { pressed: false, palm_visible: false, tilted: false },
            GestureKind::BodyRotation => GestureState::Rotation { pressed: false, last_yaw: None, tilted: false },
        }
    }
}

fn active_contacts(contacts: &[Contact]) -> impl Iterator<Item = &Contact> {
    contacts.iter().filter(|c| c.phase != TouchPhase::Up)
}

/// One measurement pipeline instance. Feed frames with [`Pipeline::push`]
/// until [`Pipeline::result`] is set.
#[derive(Debug, Clone)]
pub struct Pipeline {
    gesture: GestureKind,
    profile: DeviceProfile,
    cfg: EngineConfig,
    phase: PipelinePhase,
    awaiting_release: bool,
    state: GestureState,
    started_ms: u64,
    track: Vec<f64>,
    accumulated_yaw_deg: f64,
    warnings: Vec<Warning>,
    frames_processed: usize,
    result: Option<MeasurementResult>,
    announce: bool,
}

impl Pipeline {
    pub fn new(gesture: GestureKind, profile: &DeviceProfile, cfg: &EngineConfig) -> Result<Self, EngineError> {
        profile.validate()?;
        cfg.validate()?;
        Ok(Self {
            gesture,
            profile: profile.clone(),
            cfg: cfg.clone(),
            phase: PipelinePhase::Armed,
            awaiting_release: false,
            state: GestureState::new(gesture),
            started_ms: 0,
            track: Vec::new(),
            accumulated_yaw_deg: 0.0,
            warnings: Vec::new(),
            frames_processed: 0,
            result: None,
            announce: true,
        })
    }

    /// Ignore everything until the gesture from a previous measurement is
    /// released (fingers lifted or screen press released).
    pub fn after_release(mut self) -> Self {
        self.awaiting_release = true;
        self
    }

    /// Suppress the spoken value and beep normally emitted on completion,
    /// for callers that announce results themselves.
    pub fn quiet(mut self) -> Self {
        self.announce = false;
        self
    }

    pub fn gesture(&self) -> GestureKind {
        self.gesture
    }

    pub fn phase(&self) -> PipelinePhase {
        self.phase
    }

    pub fn is_awaiting_release(&self) -> bool {
        self.awaiting_release
    }

    pub fn track(&self) -> &[f64] {
        &self.track
    }

    pub fn result(&self) -> Option<&MeasurementResult> {
        self.result.as_ref()
    }

    pub fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            gesture: self.gesture,
            frames_processed: self.frames_processed,
            estimates: self.track.len(),
            last_estimate: self.track.last().copied(),
            accumulated_yaw_deg: (self.gesture == GestureKind::BodyRotation).then_some(self.accumulated_yaw_deg),
            warnings: self.warnings.clone(),
        }
    }

    fn warn(&mut self, code: WarningCode, t_ms: u64) {
        self.warnings.push(Warning { code, t_ms });
    }

    /// Processes one frame and returns the feedback it triggers.
    pub fn push(&mut self, frame: &SensorFrame) -> Vec<FeedbackEvent> {
        let mut events = Vec::new();
        if self.phase == PipelinePhase::Stable {
            return events;
        }
        self.frames_processed += 1;
        if frame.validate(&self.profile).is_err() {
            self.warn(WarningCode::InvalidFrame, frame.t_ms);
            return events;
        }
        if self.awaiting_release {
            if self.is_release(frame) {
                self.awaiting_release = false;
            }
            return events;
        }
        if let Some(estimate) = self.estimate(frame, &mut events) {
            self.track.push(estimate);
            if stability_reached(&self.track, self.gesture, &self.cfg) {
                // the track holds at least the window, which is >= k
                let result = self.finalize(frame.t_ms).expect("window covers finalize_k");
                events.extend(self.completion_events(&result));
                self.result = Some(result);
            }
        }
        events
    }

    fn is_release(&mut self, frame: &SensorFrame) -> bool {
        match (&frame.payload, self.gesture.is_finger()) {
            (Payload::Touch(t), true) => active_contacts(&t.contacts).next().is_none(),
            (Payload::Press(p), false) => !p.pressed,
            _ => false,
        }
    }

    fn activate(&mut self, t_ms: u64) {
        self.phase = PipelinePhase::Running;
        self.started_ms = t_ms;
    }

    fn estimate(&mut self, frame: &SensorFrame, events: &mut Vec<FeedbackEvent>) -> Option<f64> {
        let t = frame.t_ms;
        let hold_ms = self.cfg.hold_to_start_ms;
        let theta = self.cfg.clamp_theta_m;
        let running = self.phase == PipelinePhase::Running;
        match (&mut self.state, &frame.payload) {
            (GestureState::OneFinger { down, anchor, lifted }, Payload::Touch(touch)) => {
                if *lifted {
                    return None;
                }
                if let Some((id, origin)) = *anchor {
                    let contact = touch.contacts.iter().find(|c| c.id == id)?;
                    if contact.phase == TouchPhase::Up {
                        *lifted = true;
                    }
                    return Some(touch_span_cm(origin, (contact.x_px, contact.y_px), &self.profile));
                }
                let active: Vec<&Contact> = active_contacts(&touch.contacts).collect();
                match (*down, active.as_slice()) {
                    (Some((id, t_down, origin)), [only]) if only.id == id => {
                        if t.saturating_sub(t_down) >= hold_ms {
                            *anchor = Some((id, origin));
                            let est = touch_span_cm(origin, (only.x_px, only.y_px), &self.profile);
                            self.activate(t);
                            return Some(est);
                        }
                    }
                    (_, [only]) if only.phase == TouchPhase::Down => {
                        *down = Some((only.id, t, (only.x_px, only.y_px)));
                    }
                    _ => *down = None,
                }
                None
            }
            (GestureState::TwoFingers, Payload::Touch(touch)) => {
                let active: Vec<&Contact> = active_contacts(&touch.contacts).collect();
                if let [a, b] = active.as_slice() {
                    if !running {
                        self.activate(t);
                    }
                    Some(touch_span_cm((a.x_px, a.y_px), (b.x_px, b.y_px), &self.profile))
                } else {
                    None
                }
            }
            (GestureState::OneHand { pressed, tracker }, Payload::Press(p)) => {
                *pressed = p.pressed;
                if !p.pressed {
                    // releasing ends motion tracking for this attempt
                    *tracker = None;
                }
                None
            }
            (GestureState::OneHand { pressed: true, tracker }, Payload::Pose(pose)) => match tracker {
                Some(tr) => {
                    let (est, fired) = tr.step(pose.position_m);
                    if fired {
                        self.warnings.push(Warning { code: WarningCode::DeltaClamped, t_ms: t });
                    }
                    Some(est)
                }
                None if !running => {
                    *tracker = Some(OneHandTracker::new(pose.position_m, theta));
                    self.activate(t);
                    Some(0.0)
                }
                None => None,
            },
            (GestureState::TwoHands { pressed, .. }, Payload::Press(p)) => {
                *pressed = p.pressed;
                None
            }
            (GestureState::TwoHands { pressed: true, palm_visible, tilted }, Payload::Palm(palm)) => {
                if !palm.detected {
                    if *palm_visible && running {
                        events.push(FeedbackEvent::new(t, FeedbackKind::BeepError));
                    }
                    *palm_visible = false;
                    return None;
                }
                *palm_visible = true;
                let width = palm.width_px.expect("validated");
                let wrist = palm.wrist_depth.expect("validated");
                let not_parallel = palm_parallelism_ok(&palm.arch_depths, wrist, width, &self.cfg).is_err();
                if not_parallel && !*tilted {
                    events.push(FeedbackEvent::new(t, FeedbackKind::BeepError));
                    self.warnings.push(Warning { code: WarningCode::PalmNotParallel, t_ms: t });
                }
                *tilted = not_parallel;
                let est = palm_distance_cm(width, &self.profile).ok()?;
                if !running {
                    self.activate(t);
                }
                Some(est)
            }
            (GestureState::Rotation { pressed, .. }, Payload::Press(p)) => {
                *pressed = p.pressed;
                None
            }
            (GestureState::Rotation { pressed: true, last_yaw, tilted }, Payload::Orientation(o)) => {
                let not_parallel = phone_parallel_ok(o.pitch_deg, o.roll_deg, &self.cfg).is_err();
                if not_parallel && !*tilted {
                    events.push(FeedbackEvent::new(t, FeedbackKind::BeepError));
                    self.warnings.push(Warning { code: WarningCode::PhoneNotParallel, t_ms: t });
                }
                *tilted = not_parallel;
                let prev = last_yaw.replace(o.yaw_deg);
                match prev {
                    Some(prev) => self.accumulated_yaw_deg += wrap_delta(prev, o.yaw_deg),
                    None => {
                        self.accumulated_yaw_deg = 0.0;
                        self.activate(t);
                    }
                }
                Some(self.accumulated_yaw_deg.abs())
            }
            _ => None,
        }
    }

    fn finalize(&mut self, t_ms: u64) -> Result<MeasurementResult, EngineError> {
        let raw = finalize_value(&self.track, &self.cfg)?;
        let rounded = round_to_resolution(raw, self.gesture)?;
        let checked = validate_range(rounded, self.gesture)?;
        if checked.was_clipped() {
            self.warn(WarningCode::RangeClipped, t_ms);
        }
        self.phase = PipelinePhase::Stable;
        Ok(MeasurementResult {
            gesture: self.gesture,
            value: checked.value(),
            raw_value: raw,
            started_ms: self.started_ms,
            ended_ms: t_ms,
            frames_processed: self.frames_processed,
            warnings: self.warnings.clone(),
            signed_rotation_deg: (self.gesture == GestureKind::BodyRotation).then_some(self.accumulated_yaw_deg),
        })
    }

    fn completion_events(&self, result: &MeasurementResult) -> Vec<FeedbackEvent> {
        if !self.announce {
            return Vec::new();
        }
        vec![
            FeedbackEvent::speech(result.ended_ms, self.gesture.speak_value(result.value)),
            FeedbackEvent::new(result.ended_ms, FeedbackKind::BeepCorrect),
        ]
    }

    /// Ends the attempt early, finalizing from whatever estimates exist.
    pub fn finish(&mut self, t_ms: u64) -> Result<(MeasurementResult, Vec<FeedbackEvent>), EngineError> {
        if let Some(result) = &self.result {
            return Ok((result.clone(), Vec::new()));
        }
        match self.phase {
            PipelinePhase::Armed => Err(EngineError::NoActivation(self.diagnostics())),
            _ if self.track.len() < self.cfg.finalize_k_frames => Err(EngineError::NeverStable(self.diagnostics())),
            _ => {
                let t = t_ms.max(self.started_ms + 1);
                let result = self.finalize(t)?;
                let events = self.completion_events(&result);
                self.result = Some(result.clone());
                Ok((result, events))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub result: MeasurementResult,
    pub events: Vec<FeedbackEvent>,
}

/// Replays a whole trace through a fresh pipeline.
pub fn run_measurement(
    trace: &TraceDocument,
    gesture: GestureKind,
    cfg: &EngineConfig,
) -> Result<Measurement, EngineError> {
    let mut pipeline = Pipeline::new(gesture, &trace.profile, cfg)?;
    let mut events = Vec::new();
    for frame in &trace.frames {
        events.extend(pipeline.push(frame));
        if let Some(result) = pipeline.result() {
            return Ok(Measurement { result: result.clone(), events });
        }
    }
    match pipeline.phase() {
        PipelinePhase::Armed => Err(EngineError::NoActivation(pipeline.diagnostics())),
        _ => Err(EngineError::NeverStable(pipeline.diagnostics())),
    }
}

//! Domain types shared by every pipeline: gestures and their units, device
//! calibration, sensor frames, engine configuration, measurement results and
//! feedback events.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("value {0} is not finite")]
    InvalidValue(f64),
    #[error("invalid device profile: {0}")]
    InvalidProfile(String),
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("unknown gesture {0:?}")]
    UnknownGesture(String),
}

/// The five body-scale expression methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureKind {
    OneFinger,
    TwoFingers,
    OneHand,
    TwoHands,
    BodyRotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Centimeters,
    Degrees,
}

impl Unit {
    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Centimeters => "cm",
            Unit::Degrees => "deg",
        }
    }

    pub fn spoken(self) -> &'static str {
        match self {
            Unit::Centimeters => "centimeters",
            Unit::Degrees => "degrees",
        }
    }
}

impl GestureKind {
    pub const ALL: [GestureKind; 5] = [
        GestureKind::OneFinger,
        GestureKind::TwoFingers,
        GestureKind::OneHand,
        GestureKind::TwoHands,
        GestureKind::BodyRotation,
    ];

    pub fn unit(self) -> Unit {
        match self {
            GestureKind::BodyRotation => Unit::Degrees,
            _ => Unit::Centimeters,
        }
    }

    /// Inclusive valid range in the gesture's unit.
    pub fn range(self) -> (f64, f64) {
        match self {
            GestureKind::OneFinger | GestureKind::TwoFingers => (0.0, 12.0),
            GestureKind::OneHand | GestureKind::TwoHands => (0.0, 120.0),
            GestureKind::BodyRotation => (0.0, 360.0),
        }
    }

    /// Reporting resolution in the gesture's unit.
    pub fn resolution(self) -> f64 {
        1.0 / self.steps_per_unit()
    }

    /// Number of resolution steps per unit. Kept integral so rounding can
    /// divide by an exact value instead of multiplying by 0.1.
    pub fn steps_per_unit(self) -> f64 {
        match self {
            GestureKind::OneFinger | GestureKind::TwoFingers => 10.0,
            _ => 1.0,
        }
    }

    /// Decimal places used when printing or speaking a value.
    pub fn decimals(self) -> usize {
        match self {
            GestureKind::OneFinger | GestureKind::TwoFingers => 1,
            _ => 0,
        }
    }

    pub fn is_finger(self) -> bool {
        matches!(self, GestureKind::OneFinger | GestureKind::TwoFingers)
    }

    pub fn label(self) -> &'static str {
        match self {
            GestureKind::OneFinger => "one-finger",
            GestureKind::TwoFingers => "two-fingers",
            GestureKind::OneHand => "one-hand",
            GestureKind::TwoHands => "two-hands",
            GestureKind::BodyRotation => "body-rotation",
        }
    }

    /// Formats `value` at the gesture's resolution with its unit symbol, e.g. `8.0 cm`.
    pub fn format_value(self, value: f64) -> String {
        format!("{:.*} {}", self.decimals(), value, self.unit().symbol())
    }

    /// Spoken form, e.g. `6.4 centimeters`.
    pub fn speak_value(self, value: f64) -> String {
        format!("{:.*} {}", self.decimals(), value, self.unit().spoken())
    }
}

impl std::str::FromStr for GestureKind {
    type Err = ModelError;

    /// Accepts the hyphenated label or the snake_case wire name.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GestureKind::ALL
            .into_iter()
            .find(|g| g.label() == s || g.label().replace('-', "_") == s)
            .ok_or_else(|| ModelError::UnknownGesture(s.to_string()))
    }
}

impl fmt::Display for GestureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Rounds `raw` to the nearest multiple of the gesture resolution, halves
/// away from zero.
///
/// Values that are a decimal half-step apart from two grid points (6.35 at
/// 0.1 cm) are usually stored as a double a hair below the half, so a
/// relative nudge of 1e-9 steps is applied before rounding.
pub fn round_to_resolution(raw: f64, gesture: GestureKind) -> Result<f64, ModelError> {
    if !raw.is_finite() {
        return Err(ModelError::InvalidValue(raw));
    }
    let steps_per_unit = gesture.steps_per_unit();
    let steps = raw * steps_per_unit;
    let nudged = steps + steps.signum() * 1e-9 * steps.abs().max(1.0);
    let rounded = nudged.round();
    // avoid -0.0 leaking into serialized output
    Ok(if rounded == 0.0 { 0.0 } else { rounded / steps_per_unit })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RangeCheck {
    Within(f64),
    Clipped(f64),
}

impl RangeCheck {
    pub fn value(self) -> f64 {
        match self {
            RangeCheck::Within(v) | RangeCheck::Clipped(v) => v,
        }
    }

    pub fn was_clipped(self) -> bool {
        matches!(self, RangeCheck::Clipped(_))
    }
}

pub fn validate_range(value: f64, gesture: GestureKind) -> Result<RangeCheck, ModelError> {
    if !value.is_finite() {
        return Err(ModelError::InvalidValue(value));
    }
    let (lo, hi) = gesture.range();
    Ok(if value < lo {
        RangeCheck::Clipped(lo)
    } else if value > hi {
        RangeCheck::Clipped(hi)
    } else {
        RangeCheck::Within(value)
    })
}

/// Per-device calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub dpi_x: f64,
    pub dpi_y: f64,
    pub screen_w_px: u32,
    pub screen_h_px: u32,
    pub palm_width_cm: f64,
    pub focal_px: f64,
}

impl Default for DeviceProfile {
    fn default() -> Self {
        Self {
            dpi_x: 160.0,
            dpi_y: 160.0,
            screen_w_px: 1080,
            screen_h_px: 1920,
            palm_width_cm: 8.0,
            focal_px: 500.0,
        }
    }
}

pub const PALM_WIDTH_BAND_CM: (f64, f64) = (5.0, 15.0);

impl DeviceProfile {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ModelError::InvalidProfile(format!("{name} must be > 0, got {v}")))
            }
        };
        positive("dpi_x", self.dpi_x)?;
        positive("dpi_y", self.dpi_y)?;
        positive("focal_px", self.focal_px)?;
        positive("palm_width_cm", self.palm_width_cm)?;
        if self.screen_w_px == 0 || self.screen_h_px == 0 {
            return Err(ModelError::InvalidProfile("screen size must be non-zero".into()));
        }
        let (lo, hi) = PALM_WIDTH_BAND_CM;
        if !(lo..=hi).contains(&self.palm_width_cm) {
            return Err(ModelError::InvalidProfile(format!(
                "palm_width_cm {} outside plausible band [{lo}, {hi}]",
                self.palm_width_cm
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TouchPhase {
    Down,
    Move,
    Up,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contact {
    pub id: u8,
    pub x_px: f64,
    pub y_px: f64,
    pub phase: TouchPhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Touch {
    pub contacts: Vec<Contact>,
}

/// Device pose from visual-inertial tracking. Quaternion is `[w, x, y, z]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub position_m: [f64; 3],
    pub orientation_q: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Orientation {
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
}

/// Palm observation from the front camera. Depths are relative values on the
/// same scale as `width_px`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Palm {
    pub detected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_px: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub arch_depths: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wrist_depth: Option<f64>,
}

impl Palm {
    pub fn lost() -> Self {
        Self { detected: false, width_px: None, arch_depths: Vec::new(), wrist_depth: None }
    }

    pub fn seen(width_px: f64, arch_depths: Vec<f64>, wrist_depth: f64) -> Self {
        Self { detected: true, width_px: Some(width_px), arch_depths, wrist_depth: Some(wrist_depth) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Press {
    pub pressed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Touch(Touch),
    Pose(Pose),
    Orientation(Orientation),
    Palm(Palm),
    Press(Press),
}

/// One timestamped sample from a simulated device.
///
/// Serialized as `{"t_ms": .., "<payload>": {..}}` with exactly one payload key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FrameRepr", into = "FrameRepr")]
pub struct SensorFrame {
    pub t_ms: u64,
    pub payload: Payload,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRepr {
    t_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    touch: Option<Touch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pose: Option<Pose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    orientation: Option<Orientation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    palm: Option<Palm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    press: Option<Press>,
}

impl TryFrom<FrameRepr> for SensorFrame {
    type Error = String;

    fn try_from(r: FrameRepr) -> Result<Self, String> {
        let mut payloads = Vec::with_capacity(1);
        if let Some(p) = r.touch {
            payloads.push(Payload::Touch(p));
        }
        if let Some(p) = r.pose {
            payloads.push(Payload::Pose(p));
        }
        if let Some(p) = r.orientation {
            payloads.push(Payload::Orientation(p));
        }
        if let Some(p) = r.palm {
            payloads.push(Payload::Palm(p));
        }
        if let Some(p) = r.press {
            payloads.push(Payload::Press(p));
        }
        if payloads.len() != 1 {
            return Err(format!("expected exactly one payload key, found {}", payloads.len()));
        }
        Ok(SensorFrame { t_ms: r.t_ms, payload: payloads.pop().unwrap() })
    }
}

impl From<SensorFrame> for FrameRepr {
    fn from(f: SensorFrame) -> Self {
        let mut r = FrameRepr { t_ms: f.t_ms, touch: None, pose: None, orientation: None, palm: None, press: None };
        match f.payload {
            Payload::Touch(p) => r.touch = Some(p),
            Payload::Pose(p) => r.pose = Some(p),
            Payload::Orientation(p) => r.orientation = Some(p),
            Payload::Palm(p) => r.palm = Some(p),
            Payload::Press(p) => r.press = Some(p),
        }
        r
    }
}

pub const MAX_CONTACTS: usize = 2;
pub const QUATERNION_NORM_TOL: f64 = 1e-6;

impl SensorFrame {
    pub fn new(t_ms: u64, payload: Payload) -> Self {
        Self { t_ms, payload }
    }

    pub fn press(t_ms: u64, pressed: bool) -> Self {
        Self::new(t_ms, Payload::Press(Press { pressed }))
    }

    /// Checks every per-frame invariant that does not depend on neighbouring frames.
    pub fn validate(&self, profile: &DeviceProfile) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidFrame(msg));
        match &self.payload {
            Payload::Touch(touch) => {
                if touch.contacts.len() > MAX_CONTACTS {
                    return bad(format!("{} touch contacts (at most {MAX_CONTACTS})", touch.contacts.len()));
                }
                if touch.contacts.len() == 2 && touch.contacts[0].id == touch.contacts[1].id {
                    return bad(format!("duplicate contact id {}", touch.contacts[0].id));
                }
                let (w, h) = (f64::from(profile.screen_w_px), f64::from(profile.screen_h_px));
                for c in &touch.contacts {
                    if !(c.x_px.is_finite() && c.y_px.is_finite())
                        || !(0.0..=w).contains(&c.x_px)
                        || !(0.0..=h).contains(&c.y_px)
                    {
                        return bad(format!("contact {} at ({}, {}) outside {w}x{h} screen", c.id, c.x_px, c.y_px));
                    }
                }
            }
            Payload::Pose(pose) => {
                if pose.position_m.iter().chain(pose.orientation_q.iter()).any(|v| !v.is_finite()) {
                    return bad("non-finite pose component".into());
                }
                let norm = pose.orientation_q.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > QUATERNION_NORM_TOL {
                    return bad(format!("quaternion norm {norm} is not unit"));
                }
            }
            Payload::Orientation(o) => {
                if !(0.0..360.0).contains(&o.yaw_deg) {
                    return bad(format!("yaw {} outside [0, 360)", o.yaw_deg));
                }
                if !(-90.0..=90.0).contains(&o.pitch_deg) {
                    return bad(format!("pitch {} outside [-90, 90]", o.pitch_deg));
                }
                if !(o.roll_deg > -180.0 && o.roll_deg <= 180.0) {
                    return bad(format!("roll {} outside (-180, 180]", o.roll_deg));
                }
            }
            Payload::Palm(palm) => {
                if palm.detected {
                    match palm.width_px {
                        Some(w) if w.is_finite() && w > 0.0 => {}
                        other => return bad(format!("detected palm needs width_px > 0, got {other:?}")),
                    }
                    if palm.arch_depths.len() < 3 || palm.arch_depths.iter().any(|d| !d.is_finite()) {
                        return bad("detected palm needs at least 3 finite arch depths".into());
                    }
                    if !palm.wrist_depth.is_some_and(f64::is_finite) {
                        return bad("detected palm needs a finite wrist_depth".into());
                    }
                }
            }
            Payload::Press(_) => {}
        }
        Ok(())
    }
}

/// Stability band per unit family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityEps {
    pub finger_cm: f64,
    pub hand_cm: f64,
    pub rotation_deg: f64,
}

impl Default for StabilityEps {
    fn default() -> Self {
        Self { finger_cm: 0.05, hand_cm: 1.0, rotation_deg: 1.0 }
    }
}

impl StabilityEps {
    pub fn for_gesture(&self, gesture: GestureKind) -> f64 {
        match gesture {
            GestureKind::OneFinger | GestureKind::TwoFingers => self.finger_cm,
            GestureKind::OneHand | GestureKind::TwoHands => self.hand_cm,
            GestureKind::BodyRotation => self.rotation_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Largest accepted per-frame pose change, meters.
    pub clamp_theta_m: f64,
    pub stability_window_frames: usize,
    pub stability_eps: StabilityEps,
    pub finalize_k_frames: usize,
    pub parallel_max_deg: f64,
    pub palm_arch_spread_max: f64,
    pub hold_to_start_ms: u64,
    pub tolerance_rel: f64,
    pub frame_rate_hz: f64,
    /// Pose displacement over an activation window that counts as motion.
    pub activation_motion_cm: f64,
    /// Accumulated yaw over an activation window that counts as rotation.
    pub activation_yaw_deg: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            clamp_theta_m: 0.02,
            stability_window_frames: 15,
            stability_eps: StabilityEps::default(),
            finalize_k_frames: 10,
            parallel_max_deg: 10.0,
            palm_arch_spread_max: 0.15,
            hold_to_start_ms: 3000,
            tolerance_rel: 0.05,
            frame_rate_hz: 30.0,
            activation_motion_cm: 2.0,
            activation_yaw_deg: 2.0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let checks = [
            ("clamp_theta_m", self.clamp_theta_m),
            ("stability_eps.finger_cm", self.stability_eps.finger_cm),
            ("stability_eps.hand_cm", self.stability_eps.hand_cm),
            ("stability_eps.rotation_deg", self.stability_eps.rotation_deg),
            ("parallel_max_deg", self.parallel_max_deg),
            ("palm_arch_spread_max", self.palm_arch_spread_max),
            ("tolerance_rel", self.tolerance_rel),
            ("frame_rate_hz", self.frame_rate_hz),
            ("activation_motion_cm", self.activation_motion_cm),
            ("activation_yaw_deg", self.activation_yaw_deg),
        ];
        for (name, v) in checks {
            // NaN fails this too
            if !(v > 0.0) {
                return Err(ModelError::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.hold_to_start_ms == 0 || self.finalize_k_frames == 0 {
            return Err(ModelError::InvalidConfig("hold_to_start_ms and finalize_k_frames must be > 0".into()));
        }
        if self.stability_window_frames < 2 || self.stability_window_frames < self.finalize_k_frames {
            return Err(ModelError::InvalidConfig(format!(
                "stability_window_frames ({}) must be >= 2 and >= finalize_k_frames ({})",
                self.stability_window_frames, self.finalize_k_frames
            )));
        }
        Ok(())
    }

    /// Nominal frame period in milliseconds.
    pub fn frame_ms(&self) -> f64 {
        1000.0 / self.frame_rate_hz
    }
}

/// Contents of a `--config` file: engine thresholds plus the device profile.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigFile {
    pub engine: EngineConfig,
    pub profile: DeviceProfile,
}

impl ConfigFile {
    /// Parses the JSON object. Missing engine fields fall back to defaults,
    /// unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let mut map: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(text).map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
        let profile = match map.remove("profile") {
            Some(v) => serde_json::from_value(v).map_err(|e| ModelError::InvalidProfile(e.to_string()))?,
            None => DeviceProfile::default(),
        };
        let engine: EngineConfig = serde_json::from_value(serde_json::Value::Object(map))
            .map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
        profile.validate()?;
        engine.validate()?;
        Ok(Self { engine, profile })
    }

    pub fn to_json(&self) -> String {
        let mut value = serde_json::to_value(&self.engine).expect("config serializes");
        value
            .as_object_mut()
            .expect("config is an object")
            .insert("profile".into(), serde_json::to_value(&self.profile).expect("profile serializes"));
        serde_json::to_string_pretty(&value).expect("config serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningCode {
    PalmNotParallel,
    PhoneNotParallel,
    DeltaClamped,
    /// A frame failed validation and was skipped.
    InvalidFrame,
    /// The raw value fell outside the gesture range and was clipped.
    RangeClipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub code: WarningCode,
    pub t_ms: u64,
}

/// The finalized value of one gesture execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementResult {
    pub gesture: GestureKind,
    pub value: f64,
    pub raw_value: f64,
    pub started_ms: u64,
    pub ended_ms: u64,
    pub frames_processed: usize,
    pub warnings: Vec<Warning>,
    /// Signed accumulated yaw for body rotation; `value` carries its magnitude.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signed_rotation_deg: Option<f64>,
}

impl MeasurementResult {
    pub fn warning_count(&self, code: WarningCode) -> usize {
        self.warnings.iter().filter(|w| w.code == code).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeedbackKind {
    BeepCorrect,
    BeepError,
    Speech { text: String },
    Vibration { amplitude: f64, duration_ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub t_ms: u64,
    #[serde(flatten)]
    pub kind: FeedbackKind,
}

impl FeedbackEvent {
    pub fn new(t_ms: u64, kind: FeedbackKind) -> Self {
        Self { t_ms, kind }
    }

    pub fn speech(t_ms: u64, text: impl Into<String>) -> Self {
        Self::new(t_ms, FeedbackKind::Speech { text: text.into() })
    }

    pub fn is_vibration(&self) -> bool {
        matches!(self.kind, FeedbackKind::Vibration { .. })
    }
}

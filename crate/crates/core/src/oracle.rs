//! Synthetic trace generators with known ground truth.
//!
//! These compute frame content directly from the physical quantity (pixels
//! from DPI, palm width from the pinhole relation, wrapped yaw) and share no
//! code with the measurement engine, so a round trip through the engine is an
//! independent check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use thiserror::Error;

use crate::model::{
    Contact, DeviceProfile, GestureKind, Orientation, Palm, Payload, Pose, SensorFrame, Touch, TouchPhase,
};
use crate::trace_io::{GroundTruth, TraceDocument};

/// Generated traces run at this rate.
pub const FRAME_RATE_HZ: f64 = 30.0;
/// Frames held still at the end of every gesture (twice the default stability window).
pub const HOLD_FRAMES: usize = 30;
/// Shortest pose path accepted: default stability window plus ten frames.
pub const MIN_POSE_FRAMES: usize = 25;
/// Lead-in before a one-finger slide, matching the default hold-to-start time.
pub const ONE_FINGER_LEAD_MS: u64 = 3000;
/// Largest per-frame finger travel while sliding.
const FINGER_STEP_CM: f64 = 0.25;
const MAX_FINGER_MOVE_FRAMES: usize = 30;
const IDENTITY_Q: [f64; 4] = [1.0, 0.0, 0.0, 0.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("span of {span_px:.1} px does not fit on a {screen_px} px wide screen")]
    OffScreen { span_px: f64, screen_px: u32 },
    #[error("bad generator parameters: {0}")]
    BadParams(String),
}

fn bad(msg: impl Into<String>) -> OracleError {
    OracleError::BadParams(msg.into())
}

pub fn frame_time_ms(index: usize) -> u64 {
    (index as f64 * 1000.0 / FRAME_RATE_HZ).round() as u64
}

/// Appends frames at consecutive frame times.
struct Timeline {
    frames: Vec<SensorFrame>,
}

impl Timeline {
    fn new() -> Self {
        Self { frames: Vec::new() }
    }

    fn push(&mut self, payload: Payload) {
        let t = frame_time_ms(self.frames.len());
        self.frames.push(SensorFrame::new(t, payload));
    }

    fn into_doc(self, profile: &DeviceProfile, gesture: GestureKind, value: f64) -> TraceDocument {
        TraceDocument {
            profile: profile.clone(),
            ground_truth: Some(GroundTruth { gesture, value }),
            frames: self.frames,
        }
    }
}

fn uniform_noise(rng: &mut ChaCha8Rng, amplitude: f64) -> f64 {
    if amplitude > 0.0 {
        rng.random_range(-amplitude..=amplitude)
    } else {
        0.0
    }
}

fn touch_frame(contacts: Vec<Contact>) -> Payload {
    Payload::Touch(Touch { contacts })
}

/// Finger slide (one finger) or pinch-open (two fingers) to `distance_cm`
/// along the screen's x axis.
///
/// One finger: Down, a still lead-in of [`ONE_FINGER_LEAD_MS`], the slide,
/// [`HOLD_FRAMES`] held frames, Up. Two fingers: both contacts start together
/// at the screen centre and separate symmetrically. Every frame after the
/// Down gets independent uniform noise in `[-noise_px, noise_px]` per axis.
pub fn gen_touch_trace(
    distance_cm: f64,
    profile: &DeviceProfile,
    two_fingers: bool,
    noise_px: f64,
    seed: u64,
) -> Result<TraceDocument, OracleError> {
    profile.validate().map_err(|e| bad(e.to_string()))?;
    if !(0.0..=12.0).contains(&distance_cm) {
        return Err(bad(format!("touch distance {distance_cm} cm outside [0, 12]")));
    }
    if !(noise_px >= 0.0) || !noise_px.is_finite() {
        return Err(bad(format!("noise_px must be >= 0, got {noise_px}")));
    }
    let w = f64::from(profile.screen_w_px);
    let h = f64::from(profile.screen_h_px);
    let span_px = distance_cm * profile.dpi_x / 2.54;
    if span_px > w {
        return Err(OracleError::OffScreen { span_px, screen_px: profile.screen_w_px });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = (h / 2.0).round();
    let move_frames = ((distance_cm / FINGER_STEP_CM).ceil() as usize).clamp(1, MAX_FINGER_MOVE_FRAMES);
    let noisy = |x: f64, y: f64, rng: &mut ChaCha8Rng| {
        let nx = (x + uniform_noise(rng, noise_px)).clamp(0.0, w);
        let ny = (y + uniform_noise(rng, noise_px)).clamp(0.0, h);
        (nx, ny)
    };
    let contact = |id, (x_px, y_px): (f64, f64), phase| Contact { id, x_px, y_px, phase };
    let mut tl = Timeline::new();

    if !two_fingers {
        let x0 = ((w - span_px) / 2.0).floor();
        tl.push(touch_frame(vec![contact(0, (x0, y), TouchPhase::Down)]));
        while frame_time_ms(tl.frames.len()) < ONE_FINGER_LEAD_MS + frame_time_ms(1) {
            let p = noisy(x0, y, &mut rng);
            tl.push(touch_frame(vec![contact(0, p, TouchPhase::Move)]));
        }
        for j in 1..=move_frames {
            let x = x0 + span_px * j as f64 / move_frames as f64;
            let p = noisy(x, y, &mut rng);
            tl.push(touch_frame(vec![contact(0, p, TouchPhase::Move)]));
        }
        for _ in 0..HOLD_FRAMES {
            let p = noisy(x0 + span_px, y, &mut rng);
            tl.push(touch_frame(vec![contact(0, p, TouchPhase::Move)]));
        }
        let p = noisy(x0 + span_px, y, &mut rng);
        tl.push(touch_frame(vec![contact(0, p, TouchPhase::Up)]));
        return Ok(tl.into_doc(profile, GestureKind::OneFinger, distance_cm));
    }

    let cx = w / 2.0;
    let pair = |half: f64, phase, rng: &mut ChaCha8Rng| {
        vec![contact(0, noisy(cx - half, y, rng), phase), contact(1, noisy(cx + half, y, rng), phase)]
    };
    tl.push(touch_frame(vec![contact(0, (cx, y), TouchPhase::Down), contact(1, (cx, y), TouchPhase::Down)]));
    for j in 1..=move_frames {
        let half = span_px / 2.0 * j as f64 / move_frames as f64;
        tl.push(touch_frame(pair(half, TouchPhase::Move, &mut rng)));
    }
    for _ in 0..HOLD_FRAMES {
        tl.push(touch_frame(pair(span_px / 2.0, TouchPhase::Move, &mut rng)));
    }
    tl.push(touch_frame(pair(span_px / 2.0, TouchPhase::Up, &mut rng)));
    Ok(tl.into_doc(profile, GestureKind::TwoFingers, distance_cm))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseTraceParams {
    pub distance_cm: f64,
    /// Pose samples along the path, origin and target included.
    pub n_frames: usize,
    /// Standard deviation of per-axis Gaussian jitter, meters.
    pub jitter_m: f64,
    /// Number of coordinate leaps injected mid-path.
    pub outlier_count: usize,
    /// Magnitude of each leap, meters.
    pub outlier_mag_m: f64,
    pub seed: u64,
    /// Move along the (1,1,1) diagonal instead of the x axis.
    pub three_axis: bool,
}

/// Motion samples giving roughly 1 cm per step for a path of `distance_cm`.
pub fn default_pose_frames(distance_cm: f64) -> usize {
    (distance_cm.max(0.0).ceil() as usize + 1).max(MIN_POSE_FRAMES)
}

impl PoseTraceParams {
    pub fn new(distance_cm: f64, n_frames: usize) -> Self {
        Self {
            distance_cm,
            n_frames,
            jitter_m: 0.0,
            outlier_count: 0,
            outlier_mag_m: 0.0,
            seed: 0,
            three_axis: false,
        }
    }
}

/// One-hand phone move: Press, a linear path from the origin, a hold at the
/// target, release.
///
/// Outliers model tracking relocalization: from a random frame in the middle
/// third of the path onward, every position is offset by `outlier_mag_m` in a
/// random direction.
pub fn gen_pose_trace(params: &PoseTraceParams, profile: &DeviceProfile) -> Result<TraceDocument, OracleError> {
    let p = params;
    if !(0.0..=120.0).contains(&p.distance_cm) {
        return Err(bad(format!("pose distance {} cm outside [0, 120]", p.distance_cm)));
    }
    if p.n_frames < MIN_POSE_FRAMES {
        return Err(bad(format!("n_frames {} below minimum {MIN_POSE_FRAMES}", p.n_frames)));
    }
    if !(p.jitter_m >= 0.0 && p.jitter_m.is_finite()) || !(p.outlier_mag_m >= 0.0 && p.outlier_mag_m.is_finite()) {
        return Err(bad("jitter and outlier magnitude must be finite and >= 0"));
    }
    let middle = p.n_frames / 3..(2 * p.n_frames) / 3;
    if p.outlier_count > middle.len() {
        return Err(bad(format!("at most {} outliers fit in a {}-frame path", middle.len(), p.n_frames)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let jitter = Normal::new(0.0, p.jitter_m).map_err(|e| bad(e.to_string()))?;

    let dir = if p.three_axis { [1.0 / 3f64.sqrt(); 3] } else { [1.0, 0.0, 0.0] };
    let length_m = p.distance_cm / 100.0;

    let mut leap_frames: Vec<usize> = rand::seq::index::sample(&mut rng, middle.len(), p.outlier_count)
        .into_iter()
        .map(|i| middle.start + i)
        .collect();
    leap_frames.sort_unstable();
    let leaps: Vec<(usize, [f64; 3])> = leap_frames
        .into_iter()
        .map(|frame| {
            let u: [f64; 3] = UnitSphere.sample(&mut rng);
            (frame, [u[0] * p.outlier_mag_m, u[1] * p.outlier_mag_m, u[2] * p.outlier_mag_m])
        })
        .collect();

    let mut tl = Timeline::new();
    tl.push(Payload::Press(crate::model::Press { pressed: true }));
    let total = p.n_frames + HOLD_FRAMES;
    for i in 0..total {
        let frac = (i.min(p.n_frames - 1)) as f64 / (p.n_frames - 1) as f64;
        let mut pos = [dir[0] * length_m * frac, dir[1] * length_m * frac, dir[2] * length_m * frac];
        for (frame, offset) in &leaps {
            if i >= *frame {
                for k in 0..3 {
                    pos[k] += offset[k];
                }
            }
        }
        if p.jitter_m > 0.0 {
            for v in &mut pos {
                *v += jitter.sample(&mut rng);
            }
        }
        tl.push(Payload::Pose(Pose { position_m: pos, orientation_q: IDENTITY_Q }));
    }
    tl.push(Payload::Press(crate::model::Press { pressed: false }));
    Ok(tl.into_doc(profile, GestureKind::OneHand, p.distance_cm))
}

/// Palm held at `distance_cm` from the front camera with a flat knuckle arch.
pub fn gen_palm_trace(
    distance_cm: f64,
    profile: &DeviceProfile,
    hold_frames: usize,
    seed: u64,
) -> Result<TraceDocument, OracleError> {
    gen_palm_trace_with_tilt(distance_cm, profile, hold_frames, 0.0, seed)
}

/// Like [`gen_palm_trace`], but one knuckle (chosen by `seed`) sits
/// `tilt_ratio * width_px` deeper than the others.
pub fn gen_palm_trace_with_tilt(
    distance_cm: f64,
    profile: &DeviceProfile,
    hold_frames: usize,
    tilt_ratio: f64,
    seed: u64,
) -> Result<TraceDocument, OracleError> {
    profile.validate().map_err(|e| bad(e.to_string()))?;
    if !(distance_cm > 0.0) || distance_cm > 120.0 {
        return Err(bad(format!("palm distance {distance_cm} cm outside (0, 120]")));
    }
    if hold_frames < HOLD_FRAMES / 2 {
        return Err(bad(format!("hold_frames {hold_frames} shorter than a stability window")));
    }
    if !(tilt_ratio >= 0.0) || !tilt_ratio.is_finite() {
        return Err(bad("tilt ratio must be >= 0"));
    }
    let width_px = profile.focal_px * profile.palm_width_cm / distance_cm;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut depths = vec![0.0; 4];
    if tilt_ratio > 0.0 {
        let knuckle = rng.random_range(0..depths.len());
        depths[knuckle] = tilt_ratio * width_px;
    }
    let mut tl = Timeline::new();
    tl.push(Payload::Press(crate::model::Press { pressed: true }));
    for _ in 0..hold_frames {
        tl.push(Payload::Palm(Palm::seen(width_px, depths.clone(), 0.0)));
    }
    tl.push(Payload::Press(crate::model::Press { pressed: false }));
    Ok(tl.into_doc(profile, GestureKind::TwoHands, distance_cm))
}

fn wrap_yaw(yaw: f64) -> f64 {
    let y = yaw.rem_euclid(360.0);
    // rem_euclid can land on 360.0 for tiny negative inputs
    if y >= 360.0 {
        0.0
    } else {
        y
    }
}

/// Body rotation by `angle_deg` (sign gives direction) from `start_yaw_deg`
/// at a constant rate, with a level phone. Yaw samples are reported in
/// [0, 360). The seed is accepted for a uniform generator interface; the
/// trace is noiseless.
pub fn gen_rotation_trace(
    angle_deg: f64,
    start_yaw_deg: f64,
    rate_deg_per_frame: f64,
    seed: u64,
    profile: &DeviceProfile,
) -> Result<TraceDocument, OracleError> {
    let _ = seed;
    if !(angle_deg.abs() <= 360.0) {
        return Err(bad(format!("rotation {angle_deg} deg outside [-360, 360]")));
    }
    if !(rate_deg_per_frame > 0.0 && rate_deg_per_frame < 180.0) {
        return Err(bad(format!("rate {rate_deg_per_frame} deg/frame outside (0, 180)")));
    }
    if !(0.0..360.0).contains(&start_yaw_deg) {
        return Err(bad(format!("start yaw {start_yaw_deg} outside [0, 360)")));
    }
    let steps = (angle_deg.abs() / rate_deg_per_frame).ceil() as usize;
    let sign = angle_deg.signum();
    let level = |yaw: f64| Payload::Orientation(Orientation { yaw_deg: wrap_yaw(yaw), pitch_deg: 0.0, roll_deg: 0.0 });

    let mut tl = Timeline::new();
    tl.push(Payload::Press(crate::model::Press { pressed: true }));
    for k in 0..=steps {
        let turned = (k as f64 * rate_deg_per_frame).min(angle_deg.abs());
        tl.push(level(start_yaw_deg + sign * turned));
    }
    for _ in 0..HOLD_FRAMES {
        tl.push(level(start_yaw_deg + angle_deg));
    }
    tl.push(Payload::Press(crate::model::Press { pressed: false }));
    Ok(tl.into_doc(profile, GestureKind::BodyRotation, angle_deg.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace_io::{parse_trace, write_trace};

    fn touch_xs(doc: &TraceDocument) -> Vec<Vec<f64>> {
        doc.frames
            .iter()
            .filter_map(|f| match &f.payload {
                Payload::Touch(t) => Some(t.contacts.iter().map(|c| c.x_px).collect()),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn one_finger_span_in_pixels() {
        let doc = gen_touch_trace(6.35, &DeviceProfile::default(), false, 0.0, 1).unwrap();
        let xs = touch_xs(&doc);
        let span = xs.last().unwrap()[0] - xs.first().unwrap()[0];
        assert!((span - 400.0).abs() < 1e-9, "{span}");
        assert_eq!(doc.ground_truth.as_ref().unwrap().value, 6.35);
        // held still for the lead-in before sliding
        let lead_end = doc.frames.iter().position(|f| f.t_ms >= ONE_FINGER_LEAD_MS).unwrap();
        assert!(xs[..=lead_end].iter().all(|x| x[0] == xs[0][0]));
    }

    #[test]
    fn zero_distance_touch() {
        for two in [false, true] {
            let doc = gen_touch_trace(0.0, &DeviceProfile::default(), two, 0.0, 1).unwrap();
            let xs = touch_xs(&doc);
            let first = &xs[0];
            let last = xs.last().unwrap();
            assert_eq!(first, last);
            assert_eq!(doc.ground_truth.as_ref().unwrap().value, 0.0);
        }
    }

    #[test]
    fn two_finger_separates_to_span() {
        let doc = gen_touch_trace(5.08, &DeviceProfile::default(), true, 0.0, 1).unwrap();
        let last = touch_xs(&doc).pop().unwrap();
        assert!((last[1] - last[0] - 320.0).abs() < 1e-9);
    }

    #[test]
    fn touch_off_screen() {
        let narrow = DeviceProfile { screen_w_px: 300, ..DeviceProfile::default() };
        assert!(matches!(gen_touch_trace(6.35, &narrow, false, 0.0, 0), Err(OracleError::OffScreen { .. })));
        assert!(gen_touch_trace(13.0, &DeviceProfile::default(), false, 0.0, 0).is_err());
    }

    #[test]
    fn pose_endpoints() {
        let doc = gen_pose_trace(&PoseTraceParams::new(50.0, 60), &DeviceProfile::default()).unwrap();
        let poses: Vec<[f64; 3]> = doc
            .frames
            .iter()
            .filter_map(|f| match &f.payload {
                Payload::Pose(p) => Some(p.position_m),
                _ => None,
            })
            .collect();
        assert_eq!(poses[0], [0.0; 3]);
        assert_eq!(*poses.last().unwrap(), [0.5, 0.0, 0.0]);
        assert!(matches!(doc.frames[0].payload, Payload::Press(_)));
        assert!(matches!(doc.frames.last().unwrap().payload, Payload::Press(_)));

        let still = gen_pose_trace(&PoseTraceParams::new(0.0, 30), &DeviceProfile::default()).unwrap();
        assert!(still.frames.iter().all(|f| match &f.payload {
            Payload::Pose(p) => p.position_m == [0.0; 3],
            _ => true,
        }));
    }

    #[test]
    fn pose_bad_params() {
        let p = DeviceProfile::default();
        assert!(gen_pose_trace(&PoseTraceParams::new(130.0, 60), &p).is_err());
        assert!(gen_pose_trace(&PoseTraceParams::new(50.0, 10), &p).is_err());
        let too_many = PoseTraceParams { outlier_count: 100, ..PoseTraceParams::new(50.0, 60) };
        assert!(gen_pose_trace(&too_many, &p).is_err());
    }

    #[test]
    fn palm_width_from_pinhole() {
        let doc = gen_palm_trace(40.0, &DeviceProfile::default(), 30, 0).unwrap();
        let Payload::Palm(palm) = &doc.frames[1].payload else { panic!() };
        assert_eq!(palm.width_px, Some(100.0));
        let doc = gen_palm_trace(8.0, &DeviceProfile::default(), 30, 0).unwrap();
        let Payload::Palm(palm) = &doc.frames[1].payload else { panic!() };
        assert_eq!(palm.width_px, Some(500.0));
        assert!(gen_palm_trace(0.0, &DeviceProfile::default(), 30, 0).is_err());
    }

    #[test]
    fn rotation_wraps_through_zero() {
        let doc = gen_rotation_trace(20.0, 350.0, 5.0, 0, &DeviceProfile::default()).unwrap();
        let yaws: Vec<f64> = doc
            .frames
            .iter()
            .filter_map(|f| match &f.payload {
                Payload::Orientation(o) => Some(o.yaw_deg),
                _ => None,
            })
            .collect();
        assert_eq!(&yaws[..5], &[350.0, 355.0, 0.0, 5.0, 10.0]);
        assert!(yaws[5..].iter().all(|&y| y == 10.0));

        let flat = gen_rotation_trace(0.0, 42.0, 5.0, 0, &DeviceProfile::default()).unwrap();
        assert!(flat.frames.iter().all(|f| match &f.payload {
            Payload::Orientation(o) => o.yaw_deg == 42.0,
            _ => true,
        }));
        assert!(gen_rotation_trace(400.0, 0.0, 5.0, 0, &DeviceProfile::default()).is_err());
        assert!(gen_rotation_trace(30.0, 0.0, 180.0, 0, &DeviceProfile::default()).is_err());
    }

    #[test]
    fn generated_traces_parse_and_are_deterministic() {
        let p = DeviceProfile::default();
        let noisy_pose = PoseTraceParams {
            jitter_m: 0.002,
            outlier_count: 2,
            outlier_mag_m: 1.0,
            seed: 11,
            ..PoseTraceParams::new(70.0, 90)
        };
        let make = || {
            vec![
                gen_touch_trace(7.3, &p, false, 1.5, 3).unwrap(),
                gen_touch_trace(4.1, &p, true, 1.5, 3).unwrap(),
                gen_pose_trace(&noisy_pose, &p).unwrap(),
                gen_palm_trace_with_tilt(55.0, &p, 40, 0.3, 9).unwrap(),
                gen_rotation_trace(-135.0, 10.0, 4.0, 0, &p).unwrap(),
            ]
        };
        for (a, b) in make().iter().zip(make().iter()) {
            let text = write_trace(a);
            assert_eq!(text, write_trace(b));
            assert_eq!(&parse_trace(&text).unwrap(), a);
        }
        let other_seed = gen_touch_trace(7.3, &p, false, 1.5, 4).unwrap();
        assert_ne!(write_trace(&other_seed), write_trace(&make()[0]));
    }
}

//! Overlay directives and keyframed transitions.
//!
//! Agents never touch pixels. They emit directives describing what the
//! compositor should draw and, for animated transitions, one keyframe per
//! output frame.
//!
//! Keyframe `k` (1-based) of an animated transition sits at `k / fps`
//! seconds, so a transition of `d` seconds ends exactly at `d` and holds
//! `round(d * fps)` samples.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::agents::ar::{CameraPose, RotationMode, Structure, Viewpoint};
use crate::agents::iv::{DisplayMode, Plane, SlicePositions};
use crate::model::CLIP_SECONDS;

pub const DEFAULT_FPS: u32 = 30;

/// Slice transition length for the CT viewer.
pub const SLICE_MOVE_SECONDS: f64 = 5.0;
/// Zoom transition length for the 3D model.
pub const ZOOM_SECONDS: f64 = 3.0;
/// Swing rotation: out, hold, back.
pub const SWING_OUT_SECONDS: f64 = 3.0;
pub const SWING_HOLD_SECONDS: f64 = 1.0;
pub const SWING_BACK_SECONDS: f64 = 3.0;
pub const SWING_DEGREES: f64 = 30.0;
/// Full turn rotation.
pub const FULL_TURN_SECONDS: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TimelineError {
    #[error("duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("fps must be positive")]
    ZeroFps,
    #[error("from/to vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("static rotation has no profile")]
    StaticRotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    TopRight,
    RightSide,
    Center,
    UpperRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectiveKind {
    TextOverlay,
    ClearOverlay,
    CtSmallViews,
    CtZoomView,
    Scene3d,
}

/// Parameters of one rendered frame of the 3D model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePayload {
    pub visible: BTreeSet<Structure>,
    pub view: Viewpoint,
    pub camera: CameraPose,
    pub rotation: RotationMode,
    /// Rotation away from `view`, degrees, always non-negative.
    pub angle_deg: f64,
    pub zoom_center: [f64; 3],
    pub zoom_scale: f64,
    pub zoom_level: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    TextOverlay { text: String },
    ClearOverlay,
    CtSmallViews { positions: SlicePositions },
    CtZoomView { positions: SlicePositions, main_view: Plane },
    #[serde(rename = "scene_3d")]
    Scene3d(ScenePayload),
}

impl Payload {
    pub fn kind(&self) -> DirectiveKind {
        match self {
            Payload::TextOverlay { .. } => DirectiveKind::TextOverlay,
            Payload::ClearOverlay => DirectiveKind::ClearOverlay,
            Payload::CtSmallViews { .. } => DirectiveKind::CtSmallViews,
            Payload::CtZoomView { .. } => DirectiveKind::CtZoomView,
            Payload::Scene3d(_) => DirectiveKind::Scene3d,
        }
    }

    /// CT payload for a display mode, or a clear directive for `none`.
    pub fn for_ct(mode: DisplayMode, positions: SlicePositions, main_view: Plane) -> Self {
        match mode {
            DisplayMode::None => Payload::ClearOverlay,
            DisplayMode::SmallViews => Payload::CtSmallViews { positions },
            DisplayMode::ZoomView => Payload::CtZoomView { positions, main_view },
        }
    }
}

/// One instruction to the compositor, active over `span` (clip-relative seconds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayDirective {
    pub anchor: Anchor,
    pub span: (f64, f64),
    #[serde(flatten)]
    pub payload: Payload,
}

impl OverlayDirective {
    pub fn kind(&self) -> DirectiveKind {
        self.payload.kind()
    }

    /// A directive that stays up for the rest of the clip.
    pub fn hold(anchor: Anchor, payload: Payload) -> Self {
        Self { anchor, span: (0.0, CLIP_SECONDS), payload }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub t_s: f64,
    pub directive: OverlayDirective,
}

/// Time-ordered directive samples for one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayTimeline {
    pub fps: u32,
    pub keyframes: Vec<Keyframe>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl OverlayTimeline {
    pub fn empty(fps: u32) -> Self {
        Self { fps, keyframes: Vec::new(), warnings: Vec::new() }
    }

    /// A single directive held from the start of the clip.
    pub fn still(fps: u32, directive: OverlayDirective) -> Self {
        Self { fps, keyframes: alloc::vec![Keyframe { t_s: 0.0, directive }], warnings: Vec::new() }
    }

    /// One keyframe per payload at `k / fps`; each sample holds until the next,
    /// the last until the end of the clip.
    pub fn animated(fps: u32, anchor: Anchor, payloads: Vec<Payload>) -> Self {
        let n = payloads.len();
        let dt = 1.0 / f64::from(fps);
        let keyframes = payloads
            .into_iter()
            .enumerate()
            .map(|(i, payload)| {
                let t_s = (i + 1) as f64 * dt;
                let end = if i + 1 == n { CLIP_SECONDS.max(t_s + dt) } else { t_s + dt };
                Keyframe { t_s, directive: OverlayDirective { anchor, span: (t_s, end), payload } }
            })
            .collect();
        let mut tl = Self { fps, keyframes, warnings: Vec::new() };
        tl.truncate_to(CLIP_SECONDS);
        tl
    }

    pub fn len(&self) -> usize {
        self.keyframes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }

    pub fn last(&self) -> Option<&OverlayDirective> {
        self.keyframes.last().map(|k| &k.directive)
    }

    /// Drops keyframes past `limit_s` and clips spans, recording a warning.
    pub fn truncate_to(&mut self, limit_s: f64) {
        let eps = 1e-9;
        let before = self.keyframes.len();
        self.keyframes.retain(|k| k.t_s <= limit_s + eps);
        let dropped = before - self.keyframes.len();
        if dropped > 0 {
            self.warnings.push(format!("truncated {dropped} keyframes past {limit_s} s"));
        }
        for k in &mut self.keyframes {
            k.directive.span.1 = k.directive.span.1.min(limit_s.max(k.t_s + eps));
        }
    }

    /// Appends `other` shifted by `offset_s`, keeping the result inside one clip.
    pub fn append(&mut self, mut other: OverlayTimeline, offset_s: f64) {
        for k in &mut other.keyframes {
            k.t_s += offset_s;
            k.directive.span.0 += offset_s;
            k.directive.span.1 += offset_s;
        }
        self.keyframes.extend(other.keyframes);
        self.warnings.extend(other.warnings);
        self.truncate_to(CLIP_SECONDS);
    }
}

/// Number of samples for a transition: `round(duration * fps)`, at least 1.
pub fn frame_count(duration_s: f64, fps: u32) -> Result<usize, TimelineError> {
    if fps == 0 {
        return Err(TimelineError::ZeroFps);
    }
    if duration_s.is_nan() || duration_s <= 0.0 {
        return Err(TimelineError::NonPositiveDuration(duration_s));
    }
    Ok((libm::round(duration_s * f64::from(fps)) as usize).max(1))
}

/// Linear ramp from `from` to `to`; the first sample equals `from`, the last `to`.
///
/// A single-sample transition yields just `to`.
pub fn interpolate_linear(from: &[f64], to: &[f64], duration_s: f64, fps: u32) -> Result<Vec<Vec<f64>>, TimelineError> {
    if from.len() != to.len() {
        return Err(TimelineError::LengthMismatch(from.len(), to.len()));
    }
    let n = frame_count(duration_s, fps)?;
    if n == 1 {
        return Ok(alloc::vec![to.to_vec()]);
    }
    let last = (n - 1) as f64;
    Ok((0..n)
        .map(|k| {
            let u = k as f64 / last;
            from.iter().zip(to).map(|(a, b)| if k + 1 == n { *b } else { a + (b - a) * u }).collect()
        })
        .collect())
}

/// Integer variant: each component rounded half away from zero.
pub fn interpolate_integer(from: &[i64], to: &[i64], duration_s: f64, fps: u32) -> Result<Vec<Vec<i64>>, TimelineError> {
    let f: Vec<f64> = from.iter().map(|v| *v as f64).collect();
    let t: Vec<f64> = to.iter().map(|v| *v as f64).collect();
    Ok(interpolate_linear(&f, &t, duration_s, fps)?
        .into_iter()
        .map(|row| row.into_iter().map(|v| libm::round(v) as i64).collect())
        .collect())
}

/// Rotation angle samples (degrees) for a rotation mode.
///
/// Swing modes go out to 30°, hold, and come back over 3 + 1 + 3 seconds.
/// Full-turn modes sweep 0 → 360° over 6 seconds.
pub fn rotation_profile(mode: RotationMode, fps: u32) -> Result<Vec<f64>, TimelineError> {
    if fps == 0 {
        return Err(TimelineError::ZeroFps);
    }
    let rate = f64::from(fps);
    match mode {
        RotationMode::Static => Err(TimelineError::StaticRotation),
        RotationMode::Left | RotationMode::Right | RotationMode::Up | RotationMode::Down => {
            let total = SWING_OUT_SECONDS + SWING_HOLD_SECONDS + SWING_BACK_SECONDS;
            let n = frame_count(total, fps)?;
            let hold_end = SWING_OUT_SECONDS + SWING_HOLD_SECONDS;
            Ok((1..=n)
                .map(|k| {
                    let t = k as f64 / rate;
                    if t <= SWING_OUT_SECONDS {
                        SWING_DEGREES * t / SWING_OUT_SECONDS
                    } else if t <= hold_end {
                        SWING_DEGREES
                    } else {
                        (SWING_DEGREES * (total - t) / SWING_BACK_SECONDS).max(0.0)
                    }
                })
                .collect())
        }
        RotationMode::Horizontal | RotationMode::Vertical => {
            let n = frame_count(FULL_TURN_SECONDS, fps)?;
            Ok((1..=n).map(|k| (360.0 * (k as f64 / rate) / FULL_TURN_SECONDS).min(360.0)).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_ramp() {
        let s = interpolate_linear(&[4.0, 5.0], &[4.0, 5.0], 1.0, 10).unwrap();
        assert_eq!(s.len(), 10);
        assert!(s.iter().all(|v| v == &[4.0, 5.0]));
    }

    #[test]
    fn five_second_ramp_at_30fps() {
        let s = interpolate_linear(&[0.0], &[150.0], 5.0, 30).unwrap();
        assert_eq!(s.len(), 150);
        assert_eq!(s[0], [0.0]);
        assert_eq!(s[149], [150.0]);
        // closed form: k * 150 / 149
        for (k, v) in s.iter().enumerate() {
            assert!((v[0] - k as f64 * 150.0 / 149.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_frame_is_target() {
        let s = interpolate_linear(&[0.0], &[7.0], 1.0 / 30.0, 30).unwrap();
        assert_eq!(s, [[7.0]]);
    }

    #[test]
    fn integer_rounding_is_half_away_from_zero() {
        // 0 -> -3 over 3 samples: 0, -1.5, -3
        let s = interpolate_integer(&[0], &[-3], 0.3, 10).unwrap();
        assert_eq!(s, [[0], [-2], [-3]]);
    }

    #[test]
    fn bad_inputs() {
        assert_eq!(interpolate_linear(&[0.0], &[1.0], 0.0, 30), Err(TimelineError::NonPositiveDuration(0.0)));
        assert_eq!(interpolate_linear(&[0.0], &[1.0, 2.0], 1.0, 30), Err(TimelineError::LengthMismatch(1, 2)));
        assert_eq!(rotation_profile(RotationMode::Static, 30), Err(TimelineError::StaticRotation));
    }

    #[test]
    fn swing_profile_at_30fps() {
        let a = rotation_profile(RotationMode::Left, 30).unwrap();
        assert_eq!(a.len(), 210);
        // 1-based frame numbers from the 3-1-3 timing
        assert!((a[90 - 1] - 30.0).abs() < 1e-12);
        assert!(a[90 - 1..120].iter().all(|v| (v - 30.0).abs() < 1e-12));
        assert!(a[209].abs() < 1e-12);
        assert!((a[0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn full_turn_profiles() {
        let h = rotation_profile(RotationMode::Horizontal, 30).unwrap();
        assert_eq!(h.len(), 180);
        assert_eq!(*h.last().unwrap(), 360.0);
        let v = rotation_profile(RotationMode::Vertical, 10).unwrap();
        assert_eq!(v.len(), 60);
        assert_eq!(*v.last().unwrap(), 360.0);
    }

    #[test]
    fn animated_times_and_spans() {
        let payloads = (0..5).map(|_| Payload::ClearOverlay).collect();
        let tl = OverlayTimeline::animated(10, Anchor::Center, payloads);
        let times: Vec<f64> = tl.keyframes.iter().map(|k| k.t_s).collect();
        assert_eq!(times.len(), 5);
        assert!(times.windows(2).all(|w| w[0] < w[1]));
        assert!((times[4] - 0.5).abs() < 1e-12);
        assert_eq!(tl.keyframes[4].directive.span.1, CLIP_SECONDS);
        assert!(tl.keyframes.iter().all(|k| k.directive.span.0 < k.directive.span.1));
    }

    #[test]
    fn append_truncates_at_clip_end() {
        let mk = || OverlayTimeline::animated(10, Anchor::Center, (0..70).map(|_| Payload::ClearOverlay).collect());
        let mut tl = mk();
        tl.append(mk(), 7.0);
        assert!(tl.keyframes.iter().all(|k| k.t_s <= CLIP_SECONDS + 1e-9));
        assert_eq!(tl.len(), 70 + 30);
        assert_eq!(tl.warnings.len(), 1);
    }

    #[test]
    fn directive_serialises_with_kind_tag() {
        let d = OverlayDirective::hold(Anchor::TopRight, Payload::TextOverlay { text: "Age: 63".into() });
        let v = serde_json::to_value(&d).unwrap();
        assert_eq!(v["kind"], "text_overlay");
        assert_eq!(v["anchor"], "top_right");
        assert_eq!(d.kind(), DirectiveKind::TextOverlay);
        let back: OverlayDirective = serde_json::from_value(v).unwrap();
        assert_eq!(back, d);
    }
}

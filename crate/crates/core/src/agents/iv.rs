//! Image-viewer agent: CT slice navigation.
//!
//! State is the slice position per plane, the display mode and the main
//! view. SHOW_MOVE and ZOOM_IN_MOVE animate the positions over five
//! seconds; ZOOM_OUT and REMOVE only change the display mode.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{ask_object, get_bool, get_str, get_strings, pick_action, state_json, AgentError};
use crate::llm::ChatBackend;
use crate::model::AgentId;
use crate::text::{normalize, words};
use crate::timeline::{interpolate_integer, Anchor, OverlayDirective, OverlayTimeline, Payload, SLICE_MOVE_SECONDS};

/// Movement for a bare direction word.
pub const DEFAULT_STEP: i64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    Axial,
    Coronal,
    Sagittal,
}

impl Plane {
    /// Order used for unlabeled composite targets ("move to 10, 20, 50").
    pub const ALL: [Plane; 3] = [Plane::Axial, Plane::Coronal, Plane::Sagittal];

    pub fn as_str(self) -> &'static str {
        match self {
            Plane::Axial => "axial",
            Plane::Coronal => "coronal",
            Plane::Sagittal => "sagittal",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match normalize(name).as_str() {
            "axial" | "axi" | "transverse" => Some(Plane::Axial),
            "coronal" | "cor" | "frontal" => Some(Plane::Coronal),
            "sagittal" | "sag" => Some(Plane::Sagittal),
            _ => None,
        }
    }
}

/// Slice index per plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlicePositions {
    pub axial: i64,
    pub coronal: i64,
    pub sagittal: i64,
}

impl SlicePositions {
    pub fn get(&self, plane: Plane) -> i64 {
        match plane {
            Plane::Axial => self.axial,
            Plane::Coronal => self.coronal,
            Plane::Sagittal => self.sagittal,
        }
    }

    pub fn set(&mut self, plane: Plane, v: i64) {
        match plane {
            Plane::Axial => self.axial = v,
            Plane::Coronal => self.coronal = v,
            Plane::Sagittal => self.sagittal = v,
        }
    }

    pub fn to_array(self) -> [i64; 3] {
        [self.axial, self.coronal, self.sagittal]
    }

    pub fn from_slice(v: &[i64]) -> Self {
        Self { axial: v[0], coronal: v[1], sagittal: v[2] }
    }
}

/// Number of slices per plane; valid indices are `0..size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceBounds {
    pub axial: usize,
    pub coronal: usize,
    pub sagittal: usize,
}

impl SliceBounds {
    pub fn size(&self, plane: Plane) -> usize {
        match plane {
            Plane::Axial => self.axial,
            Plane::Coronal => self.coronal,
            Plane::Sagittal => self.sagittal,
        }
    }

    pub fn max_index(&self, plane: Plane) -> i64 {
        self.size(plane) as i64 - 1
    }

    pub fn middle(&self) -> SlicePositions {
        SlicePositions {
            axial: (self.axial / 2) as i64,
            coronal: (self.coronal / 2) as i64,
            sagittal: (self.sagittal / 2) as i64,
        }
    }

    pub fn contains(&self, p: &SlicePositions) -> bool {
        Plane::ALL.into_iter().all(|pl| (0..=self.max_index(pl)).contains(&p.get(pl)))
    }
}

impl Default for SliceBounds {
    /// A typical 512 × 512 × 300 chest CT.
    fn default() -> Self {
        Self { axial: 300, coronal: 512, sagittal: 512 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisplayMode {
    None,
    SmallViews,
    ZoomView,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IvState {
    pub positions: SlicePositions,
    pub mode: DisplayMode,
    /// Main view; set whenever `mode` is `zoom_view`.
    pub view: Option<Plane>,
}

impl IvState {
    /// Middle slices, nothing displayed.
    pub fn initial(bounds: &SliceBounds) -> Self {
        Self { positions: bounds.middle(), mode: DisplayMode::None, view: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IvAction {
    ShowMove,
    ZoomInMove,
    ZoomOut,
    Remove,
}

impl IvAction {
    pub const ALL: [(IvAction, &'static str); 4] = [
        (IvAction::ShowMove, "SHOW_MOVE"),
        (IvAction::ZoomInMove, "ZOOM_IN_MOVE"),
        (IvAction::ZoomOut, "ZOOM_OUT"),
        (IvAction::Remove, "REMOVE"),
    ];

    pub fn as_str(self) -> &'static str {
        Self::ALL.iter().find(|(a, _)| *a == self).map(|(_, n)| *n).unwrap_or_default()
    }

    fn moves(self) -> bool {
        matches!(self, IvAction::ShowMove | IvAction::ZoomInMove)
    }
}

/// Requested change for one plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceTarget {
    By(i64),
    To(i64),
    Min,
    Middle,
    Max,
}

impl SliceTarget {
    fn from_value(v: &Value) -> Option<Self> {
        match v {
            Value::Number(n) => n.as_f64().map(|f| SliceTarget::By(libm::round(f) as i64)),
            Value::String(s) => {
                let t = s.trim();
                if let Ok(n) = t.trim_start_matches('+').parse::<i64>() {
                    return Some(SliceTarget::By(n));
                }
                match normalize(t).as_str() {
                    "min" | "minimum" | "first" | "start" => Some(SliceTarget::Min),
                    "middle" | "mid" | "center" | "centre" => Some(SliceTarget::Middle),
                    "max" | "maximum" | "last" | "end" => Some(SliceTarget::Max),
                    _ => None,
                }
            }
            Value::Object(_) => serde_json::from_value(v.clone()).ok(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IvDecision {
    pub action: IvAction,
    pub deltas: BTreeMap<Plane, SliceTarget>,
    pub main_view: Option<Plane>,
    /// Restore defaults before applying the action ("Reset", "Initialize").
    #[serde(default)]
    pub reset: bool,
}

impl IvDecision {
    pub fn new(action: IvAction) -> Self {
        Self { action, deltas: BTreeMap::new(), main_view: None, reset: false }
    }

    /// First moved plane in axial, coronal, sagittal order.
    pub fn first_moved_plane(&self) -> Option<Plane> {
        Plane::ALL.into_iter().find(|p| self.deltas.contains_key(p))
    }
}

/// Scoring view of a decision.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IvParams {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub deltas: BTreeMap<Plane, SliceTarget>,
    /// Explicit or inferred main view; only for ZOOM_IN_MOVE.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub main_view: Option<Plane>,
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub reset: bool,
}

pub fn params_of(decision: &IvDecision) -> IvParams {
    let main_view = match decision.action {
        IvAction::ZoomInMove => decision.main_view.or_else(|| decision.first_moved_plane()),
        _ => None,
    };
    IvParams { deltas: decision.deltas.clone(), main_view, reset: decision.reset }
}

/// Direction word → plane and sign, with the anatomical convention
/// right/anterior/superior positive.
pub fn direction(word: &str) -> Option<(Plane, i64)> {
    match word {
        "right" => Some((Plane::Sagittal, 1)),
        "left" => Some((Plane::Sagittal, -1)),
        "up" | "upward" | "upwards" | "superior" | "higher" => Some((Plane::Axial, 1)),
        "down" | "downward" | "downwards" | "inferior" | "lower" => Some((Plane::Axial, -1)),
        "forward" | "forwards" | "front" | "anterior" => Some((Plane::Coronal, 1)),
        "backward" | "backwards" | "back" | "posterior" => Some((Plane::Coronal, -1)),
        _ => None,
    }
}

/// Sums direction words into relative moves, one default step per occurrence.
pub fn lexicon_moves<'a>(tokens: impl IntoIterator<Item = &'a str>) -> BTreeMap<Plane, SliceTarget> {
    let mut sums: BTreeMap<Plane, i64> = BTreeMap::new();
    for t in tokens {
        if let Some((plane, sign)) = direction(t) {
            *sums.entry(plane).or_default() += sign * DEFAULT_STEP;
        }
    }
    sums.into_iter().filter(|(_, v)| *v != 0).map(|(p, v)| (p, SliceTarget::By(v))).collect()
}

const SYSTEM_PROMPT: &str = "You are the image viewer agent of a surgical assistant that overlays CT slices. \
Actions: SHOW_MOVE (show the three small CT views, optionally moving slices), ZOOM_IN_MOVE (show one large main view, \
optionally moving slices), ZOOM_OUT (back to small views), REMOVE (hide the CT views). \
Slice moves per plane are relative {\"by\": n}, absolute {\"to\": n}, or \"min\"/\"middle\"/\"max\". \
Direction words: right/left move sagittal +/-, up/down move axial +/-, forward/front and backward/back move coronal +/-; \
each word moves 10 slices and repeated words add up. \"Reset\" or \"Initialize\" sets reset to true. \
Answer only with JSON: {\"action_probs\": {\"SHOW_MOVE\": p, \"ZOOM_IN_MOVE\": p, \"ZOOM_OUT\": p, \"REMOVE\": p}, \
\"deltas\": {\"axial\"|\"coronal\"|\"sagittal\": move}, \"main_view\": plane or null, \"reset\": bool}.";

fn user_prompt(cmd: &str, state: &IvState, bounds: &SliceBounds) -> String {
    format!(
        "Slice counts: axial {}, coronal {}, sagittal {}\nCurrent state: {}\nCommand: {}\n",
        bounds.axial,
        bounds.coronal,
        bounds.sagittal,
        state_json(state),
        cmd
    )
}

/// Reads an IV decision object.
///
/// Moves come from `deltas`, from `positions` (absolute, axial-coronal-
/// sagittal order) or from `directions` words. A moving action without any
/// of those falls back to scanning `cmd` with the direction lexicon.
pub fn decode_iv_decision(obj: &Map<String, Value>, cmd: &str) -> Result<IvDecision, AgentError> {
    let action = pick_action(obj, &IvAction::ALL)?;
    let mut d = IvDecision::new(action);
    d.reset = get_bool(obj, "reset");
    if let Some(Value::Object(m)) = obj.get("deltas") {
        for (k, v) in m {
            let plane = Plane::parse(k).ok_or_else(|| AgentError::UnknownPlane(k.clone()))?;
            if v.is_null() {
                continue;
            }
            let t = SliceTarget::from_value(v).ok_or_else(|| AgentError::BadValue { field: "deltas", value: v.to_string() })?;
            d.deltas.insert(plane, t);
        }
    }
    if let Some(Value::Array(items)) = obj.get("positions") {
        for (plane, v) in Plane::ALL.into_iter().zip(items) {
            if let Some(n) = v.as_i64() {
                d.deltas.insert(plane, SliceTarget::To(n));
            }
        }
    }
    let dirs = get_strings(obj, "directions");
    if !dirs.is_empty() {
        let normalized: Vec<String> = dirs.iter().map(|s| normalize(s)).collect();
        for (p, t) in lexicon_moves(normalized.iter().flat_map(|s| s.split(' '))) {
            d.deltas.insert(p, t);
        }
    }
    if action.moves() && d.deltas.is_empty() {
        let ws = words(cmd);
        d.deltas = lexicon_moves(ws.iter().map(String::as_str));
    }
    d.deltas.retain(|_, t| *t != SliceTarget::By(0));
    if let Some(v) = get_str(obj, "main_view") {
        if normalize(v) != "null" && normalize(v) != "none" {
            d.main_view = Some(Plane::parse(v).ok_or_else(|| AgentError::UnknownPlane(v.into()))?);
        }
    }
    if !action.moves() {
        d.deltas.clear();
        d.main_view = None;
    }
    Ok(d)
}

pub fn determine_action_iv(
    cmd: &str,
    state: &IvState,
    bounds: &SliceBounds,
    backend: &mut dyn ChatBackend,
) -> Result<IvDecision, AgentError> {
    let obj = ask_object(backend, SYSTEM_PROMPT, user_prompt(cmd, state, bounds), super::agent_label(AgentId::Iv, cmd))?;
    decode_iv_decision(&obj, cmd)
}

/// `p* = p + Δp`, absolute and named targets assigned, clamped to bounds.
pub fn update_positions(p: SlicePositions, deltas: &BTreeMap<Plane, SliceTarget>, bounds: &SliceBounds) -> SlicePositions {
    let mut out = p;
    for (plane, target) in deltas {
        let max = bounds.max_index(*plane);
        let v = match target {
            SliceTarget::By(d) => p.get(*plane).saturating_add(*d),
            SliceTarget::To(v) => *v,
            SliceTarget::Min => 0,
            SliceTarget::Middle => (bounds.size(*plane) / 2) as i64,
            SliceTarget::Max => max,
        };
        out.set(*plane, v.clamp(0, max.max(0)));
    }
    out
}

fn anchor_for(mode: DisplayMode) -> Anchor {
    match mode {
        DisplayMode::ZoomView => Anchor::Center,
        _ => Anchor::RightSide,
    }
}

/// Applies a decision. Moving actions animate over five seconds at `fps`.
pub fn apply_iv(
    state: &IvState,
    decision: &IvDecision,
    bounds: &SliceBounds,
    fps: u32,
) -> Result<(IvState, OverlayTimeline), AgentError> {
    let base = if decision.reset { IvState::initial(bounds) } else { state.clone() };
    let mut next = base.clone();
    match decision.action {
        IvAction::ShowMove | IvAction::ZoomInMove => {
            next.positions = update_positions(base.positions, &decision.deltas, bounds);
            if decision.action == IvAction::ShowMove {
                next.mode = DisplayMode::SmallViews;
            } else {
                next.mode = DisplayMode::ZoomView;
                next.view = Some(
                    decision.main_view.or_else(|| decision.first_moved_plane()).or(base.view).unwrap_or(Plane::Axial),
                );
            }
            let view = next.view.unwrap_or(Plane::Axial);
            let frames = interpolate_integer(&base.positions.to_array(), &next.positions.to_array(), SLICE_MOVE_SECONDS, fps)?;
            let payloads = frames
                .iter()
                .map(|f| Payload::for_ct(next.mode, SlicePositions::from_slice(f), view))
                .collect();
            Ok((next.clone(), OverlayTimeline::animated(fps, anchor_for(next.mode), payloads)))
        }
        IvAction::ZoomOut => {
            if next.mode == DisplayMode::ZoomView {
                next.mode = DisplayMode::SmallViews;
            }
            let payload = Payload::for_ct(next.mode, next.positions, next.view.unwrap_or(Plane::Axial));
            Ok((next, OverlayTimeline::still(fps, OverlayDirective::hold(Anchor::RightSide, payload))))
        }
        IvAction::Remove => {
            next.mode = DisplayMode::None;
            Ok((next, OverlayTimeline::still(fps, OverlayDirective::hold(Anchor::RightSide, Payload::ClearOverlay))))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{labelled, MockBackend};
    use crate::timeline::DirectiveKind;
    use proptest::prelude::*;

    const B512: SliceBounds = SliceBounds { axial: 512, coronal: 512, sagittal: 512 };

    fn decode(v: Value, cmd: &str) -> IvDecision {
        decode_iv_decision(v.as_object().unwrap(), cmd).unwrap()
    }

    #[test]
    fn update_examples() {
        let p = SlicePositions { axial: 5, coronal: 100, sagittal: 0 };
        let by = |pl, n| BTreeMap::from([(pl, SliceTarget::By(n))]);
        assert_eq!(update_positions(p, &by(Plane::Coronal, 30), &B512).coronal, 130);
        assert_eq!(update_positions(p, &by(Plane::Axial, -20), &B512).axial, 0);
        let mid = BTreeMap::from([(Plane::Axial, SliceTarget::Middle)]);
        assert_eq!(update_positions(p, &mid, &B512).axial, 256);
        let max = BTreeMap::from([(Plane::Sagittal, SliceTarget::Max), (Plane::Axial, SliceTarget::To(9999))]);
        let q = update_positions(p, &max, &B512);
        assert_eq!((q.sagittal, q.axial), (511, 511));
    }

    #[test]
    fn lexicon_and_repetition() {
        let d = decode(serde_json::json!({"action": "SHOW_MOVE"}), "Move front, front, front");
        assert_eq!(d.deltas, BTreeMap::from([(Plane::Coronal, SliceTarget::By(30))]));
        let d = decode(serde_json::json!({"action": "SHOW_MOVE", "directions": ["left", "up"]}), "x");
        assert_eq!(
            d.deltas,
            BTreeMap::from([(Plane::Axial, SliceTarget::By(10)), (Plane::Sagittal, SliceTarget::By(-10))])
        );
        let d = decode(serde_json::json!({"action": "SHOW_MOVE"}), "Move backward");
        assert_eq!(d.deltas, BTreeMap::from([(Plane::Coronal, SliceTarget::By(-10))]));
    }

    #[test]
    fn decode_forms() {
        let d = decode(serde_json::json!({"action": "SHOW_MOVE", "deltas": {"coronal": 100}}), "Coronal plus 100");
        assert_eq!(params_of(&d), IvParams { deltas: BTreeMap::from([(Plane::Coronal, SliceTarget::By(100))]), ..Default::default() });

        let d = decode(serde_json::json!({"action": "SHOW_MOVE", "positions": [10, 20, 50]}), "Move to 10, 20, 50");
        assert_eq!(d.deltas[&Plane::Axial], SliceTarget::To(10));
        assert_eq!(d.deltas[&Plane::Sagittal], SliceTarget::To(50));

        let d = decode(serde_json::json!({"action_probs": {"ZOOM_IN_MOVE": 0.9}, "main_view": "axial"}), "Axial zoom in");
        assert_eq!(d.action, IvAction::ZoomInMove);
        assert_eq!(params_of(&d).main_view, Some(Plane::Axial));

        let d = decode(serde_json::json!({"action": "ZOOM_IN_MOVE", "deltas": {"sagittal": "+20", "axial": "middle"}}), "x");
        assert_eq!(params_of(&d).main_view, Some(Plane::Axial));
        assert_eq!(d.deltas[&Plane::Sagittal], SliceTarget::By(20));

        let d = decode(serde_json::json!({"action": "ZOOM_OUT", "deltas": {"axial": 5}}), "Zoom out");
        assert!(d.deltas.is_empty());

        let bad = serde_json::json!({"action": "SHOW_MOVE", "deltas": {"oblique": 5}});
        assert!(matches!(decode_iv_decision(bad.as_object().unwrap(), "x"), Err(AgentError::UnknownPlane(_))));
    }

    #[test]
    fn params_serialise_compactly() {
        let p = IvParams { deltas: BTreeMap::from([(Plane::Coronal, SliceTarget::By(30))]), ..Default::default() };
        assert_eq!(serde_json::to_string(&p).unwrap(), r#"{"deltas":{"coronal":{"by":30}}}"#);
        let back: IvParams = serde_json::from_str(r#"{"deltas":{"axial":"middle"},"main_view":"axial"}"#).unwrap();
        assert_eq!(back.deltas[&Plane::Axial], SliceTarget::Middle);
    }

    #[test]
    fn show_move_animates_150_frames() {
        let s = IvState { positions: SlicePositions { axial: 100, coronal: 100, sagittal: 100 }, mode: DisplayMode::None, view: None };
        let mut d = IvDecision::new(IvAction::ShowMove);
        d.deltas.insert(Plane::Coronal, SliceTarget::By(100));
        let (next, tl) = apply_iv(&s, &d, &B512, 30).unwrap();
        assert_eq!(next.positions.coronal, 200);
        assert_eq!(next.mode, DisplayMode::SmallViews);
        assert_eq!(tl.len(), 150);
        assert_eq!(tl.keyframes[0].directive.payload, Payload::CtSmallViews { positions: s.positions });
        assert_eq!(tl.last().unwrap().payload, Payload::CtSmallViews { positions: next.positions });
        let cor: Vec<i64> = tl
            .keyframes
            .iter()
            .map(|k| match &k.directive.payload {
                Payload::CtSmallViews { positions } => positions.coronal,
                _ => unreachable!(),
            })
            .collect();
        assert!(cor.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(tl.keyframes[0].directive.anchor, Anchor::RightSide);
    }

    #[test]
    fn zoom_view_inference_and_zoom_out() {
        let s = IvState::initial(&B512);
        let mut d = IvDecision::new(IvAction::ZoomInMove);
        d.deltas.insert(Plane::Sagittal, SliceTarget::By(10));
        let (z, tl) = apply_iv(&s, &d, &B512, 30).unwrap();
        assert_eq!((z.mode, z.view), (DisplayMode::ZoomView, Some(Plane::Sagittal)));
        assert_eq!(tl.last().unwrap().kind(), DirectiveKind::CtZoomView);
        assert_eq!(tl.last().unwrap().anchor, Anchor::Center);

        // explicit view wins over the moved plane
        d.main_view = Some(Plane::Coronal);
        assert_eq!(apply_iv(&s, &d, &B512, 30).unwrap().0.view, Some(Plane::Coronal));

        let (out, tl) = apply_iv(&z, &IvDecision::new(IvAction::ZoomOut), &B512, 30).unwrap();
        assert_eq!(out.mode, DisplayMode::SmallViews);
        assert_eq!(out.positions, z.positions);
        assert_eq!(tl.len(), 1);
    }

    #[test]
    fn remove_is_absorbing_for_zoom_out() {
        let (r, tl) = apply_iv(&IvState::initial(&B512), &IvDecision::new(IvAction::Remove), &B512, 30).unwrap();
        assert_eq!(r.mode, DisplayMode::None);
        assert_eq!(tl.last().unwrap().payload, Payload::ClearOverlay);
        let (r2, tl2) = apply_iv(&r, &IvDecision::new(IvAction::ZoomOut), &B512, 30).unwrap();
        assert_eq!(r2.mode, DisplayMode::None);
        assert_eq!(tl2.last().unwrap().payload, Payload::ClearOverlay);
    }

    #[test]
    fn reset_restores_middle() {
        let s = IvState { positions: SlicePositions { axial: 1, coronal: 2, sagittal: 3 }, mode: DisplayMode::ZoomView, view: Some(Plane::Axial) };
        let mut d = IvDecision::new(IvAction::Remove);
        d.reset = true;
        assert_eq!(apply_iv(&s, &d, &B512, 30).unwrap().0, IvState::initial(&B512));
    }

    #[test]
    fn determine_via_mock() {
        let mut mock = MockBackend::new(labelled(
            &[("iv_agent:Coronal plus 100", r#"{"action_probs":{"SHOW_MOVE":0.93,"ZOOM_IN_MOVE":0.04},"deltas":{"coronal":{"by":100}}}"#)],
            true,
        ));
        let d = determine_action_iv("Coronal plus 100", &IvState::initial(&B512), &B512, &mut mock).unwrap();
        assert_eq!(d.action, IvAction::ShowMove);
        assert_eq!(d.deltas[&Plane::Coronal], SliceTarget::By(100));
    }

    fn arb_target() -> impl Strategy<Value = SliceTarget> {
        prop_oneof![
            (-2000i64..2000).prop_map(SliceTarget::By),
            (-2000i64..2000).prop_map(SliceTarget::To),
            Just(SliceTarget::Min),
            Just(SliceTarget::Middle),
            Just(SliceTarget::Max),
        ]
    }

    fn arb_decision() -> impl Strategy<Value = IvDecision> {
        let action = prop_oneof![
            Just(IvAction::ShowMove),
            Just(IvAction::ZoomInMove),
            Just(IvAction::ZoomOut),
            Just(IvAction::Remove)
        ];
        let plane = prop_oneof![Just(Plane::Axial), Just(Plane::Coronal), Just(Plane::Sagittal)];
        (action, proptest::collection::btree_map(plane.clone(), arb_target(), 0..3), proptest::option::of(plane), any::<bool>())
            .prop_map(|(action, deltas, main_view, reset)| {
                let mut d = IvDecision { action, deltas, main_view, reset };
                if !action.moves() {
                    d.deltas.clear();
                    d.main_view = None;
                }
                d
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn positions_stay_in_bounds(decisions in proptest::collection::vec(arb_decision(), 1000)) {
            let bounds = SliceBounds { axial: 120, coronal: 256, sagittal: 200 };
            let mut s = IvState::initial(&bounds);
            for d in &decisions {
                s.positions = update_positions(s.positions, &d.deltas, &bounds);
                prop_assert!(bounds.contains(&s.positions));
                let (n, _) = apply_iv(&s, d, &bounds, 2).unwrap();
                prop_assert!(bounds.contains(&n.positions));
                prop_assert!(n.mode != DisplayMode::ZoomView || n.view.is_some());
                s = n;
            }
        }

        #[test]
        fn interpolation_is_exact_and_monotone(d in arb_decision()) {
            let bounds = SliceBounds { axial: 300, coronal: 512, sagittal: 512 };
            let s = IvState::initial(&bounds);
            let (n, tl) = apply_iv(&s, &d, &bounds, 30).unwrap();
            if d.action.moves() {
                let pos = |k: &crate::timeline::Keyframe| match &k.directive.payload {
                    Payload::CtSmallViews { positions } | Payload::CtZoomView { positions, .. } => *positions,
                    _ => unreachable!(),
                };
                let start = if d.reset { IvState::initial(&bounds).positions } else { s.positions };
                prop_assert_eq!(pos(&tl.keyframes[0]), start);
                prop_assert_eq!(pos(tl.keyframes.last().unwrap()), n.positions);
                for plane in Plane::ALL {
                    let seq: Vec<i64> = tl.keyframes.iter().map(|k| pos(k).get(plane)).collect();
                    let up = seq.windows(2).all(|w| w[0] <= w[1]);
                    let down = seq.windows(2).all(|w| w[0] >= w[1]);
                    prop_assert!(up || down);
                }
            }
        }

        #[test]
        fn zoom_out_undoes_plain_zoom_in(a in 0i64..300, c in 0i64..512, s in 0i64..512) {
            let bounds = SliceBounds { axial: 300, coronal: 512, sagittal: 512 };
            let st = IvState { positions: SlicePositions { axial: a, coronal: c, sagittal: s }, mode: DisplayMode::SmallViews, view: None };
            let (z, _) = apply_iv(&st, &IvDecision::new(IvAction::ZoomInMove), &bounds, 30).unwrap();
            let (o, _) = apply_iv(&z, &IvDecision::new(IvAction::ZoomOut), &bounds, 30).unwrap();
            prop_assert_eq!(o.mode, DisplayMode::SmallViews);
            prop_assert_eq!(o.positions, st.positions);
        }
    }
}

//! Anatomy-rendering agent: 3D model visibility, viewpoint, rotation and zoom.
//!
//! Geometry is taken from a structure manifest (centroids and bounding
//! boxes); no meshes are rasterised here. Zoom history is a stack so that
//! zooming out retraces the zoom-in path exactly.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{ask_object, get_bool, get_str, get_strings, pick_action, state_json, AgentError};
use crate::llm::ChatBackend;
use crate::model::AgentId;
use crate::text::normalize;
use crate::timeline::{
    interpolate_linear, rotation_profile, Anchor, OverlayDirective, OverlayTimeline, Payload, ScenePayload,
    ZOOM_SECONDS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Structure {
    #[serde(rename = "LLL")]
    Lll,
    #[serde(rename = "LUL")]
    Lul,
    #[serde(rename = "RLL")]
    Rll,
    #[serde(rename = "RML")]
    Rml,
    #[serde(rename = "RUL")]
    Rul,
    #[serde(rename = "nodules")]
    Nodules,
    #[serde(rename = "trachea_bronchia")]
    TracheaBronchia,
}

impl Structure {
    pub const ALL: [Structure; 7] = [
        Structure::Lll,
        Structure::Lul,
        Structure::Rll,
        Structure::Rml,
        Structure::Rul,
        Structure::Nodules,
        Structure::TracheaBronchia,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Structure::Lll => "LLL",
            Structure::Lul => "LUL",
            Structure::Rll => "RLL",
            Structure::Rml => "RML",
            Structure::Rul => "RUL",
            Structure::Nodules => "nodules",
            Structure::TracheaBronchia => "trachea_bronchia",
        }
    }

    pub fn full_name(self) -> &'static str {
        match self {
            Structure::Lll => "left lower lobe",
            Structure::Lul => "left upper lobe",
            Structure::Rll => "right lower lobe",
            Structure::Rml => "right middle lobe",
            Structure::Rul => "right upper lobe",
            Structure::Nodules => "lung nodules",
            Structure::TracheaBronchia => "trachea and bronchia",
        }
    }

    pub fn is_lobe(self) -> bool {
        !matches!(self, Structure::Nodules | Structure::TracheaBronchia)
    }
}

const LOBES: [Structure; 5] = [Structure::Lll, Structure::Lul, Structure::Rll, Structure::Rml, Structure::Rul];

/// Phrase → structures. Names, abbreviations and group aliases such as
/// "airway" or "right lung".
pub fn resolve_structures(name: &str) -> Result<Vec<Structure>, AgentError> {
    let n = normalize(name).replace("the ", "");
    for s in Structure::ALL {
        if n == normalize(s.as_str()) || n == s.full_name() {
            return Ok(alloc::vec![s]);
        }
    }
    let one = |s| Ok(alloc::vec![s]);
    match n.as_str() {
        "nodule" | "nodules" | "lung nodule" | "tumor" | "tumors" | "lesion" => one(Structure::Nodules),
        "airway" | "airways" | "trachea" | "bronchia" | "bronchus" | "bronchi" | "trachea bronchia"
        | "trachea and bronchi" => one(Structure::TracheaBronchia),
        "right lung" => Ok(alloc::vec![Structure::Rll, Structure::Rml, Structure::Rul]),
        "left lung" => Ok(alloc::vec![Structure::Lll, Structure::Lul]),
        "lung" | "lungs" | "all lobes" | "lobes" | "both lungs" => Ok(LOBES.to_vec()),
        "all" | "everything" | "all structures" => Ok(Structure::ALL.to_vec()),
        _ => Err(AgentError::UnknownStructure(name.into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Viewpoint {
    Anterior,
    Posterior,
    Left,
    Right,
    Superior,
    Inferior,
    Surgical,
}

impl Viewpoint {
    pub const ALL: [Viewpoint; 7] = [
        Viewpoint::Anterior,
        Viewpoint::Posterior,
        Viewpoint::Left,
        Viewpoint::Right,
        Viewpoint::Superior,
        Viewpoint::Inferior,
        Viewpoint::Surgical,
    ];

    pub fn parse(name: &str) -> Option<Self> {
        let n = normalize(name);
        let n = n.trim_end_matches(" view").trim_start_matches("from the ").trim_start_matches("the ");
        match n {
            "anterior" | "front" | "frontal" => Some(Viewpoint::Anterior),
            "posterior" | "back" | "behind" | "rear" => Some(Viewpoint::Posterior),
            "left" | "left side" | "left lateral" => Some(Viewpoint::Left),
            "right" | "right side" | "right lateral" => Some(Viewpoint::Right),
            "superior" | "top" | "above" => Some(Viewpoint::Superior),
            "inferior" | "bottom" | "below" => Some(Viewpoint::Inferior),
            "surgical" | "surgeon" | "surgeons" | "surgery" | "operative" => Some(Viewpoint::Surgical),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RotationMode {
    Static,
    Left,
    Right,
    Up,
    Down,
    Horizontal,
    Vertical,
}

impl RotationMode {
    pub fn parse(name: &str) -> Option<Self> {
        let n = normalize(name);
        let n = n.trim_start_matches("to the ").trim_start_matches("rotate ").trim_start_matches("to ");
        match n {
            "static" | "none" | "stop" => Some(RotationMode::Static),
            "left" | "leftward" => Some(RotationMode::Left),
            "right" | "rightward" => Some(RotationMode::Right),
            "up" | "upward" => Some(RotationMode::Up),
            "down" | "downward" => Some(RotationMode::Down),
            "horizontal" | "horizontally" | "full" | "360" | "around" | "full horizontal" => Some(RotationMode::Horizontal),
            "vertical" | "vertically" | "full vertical" => Some(RotationMode::Vertical),
            _ => None,
        }
    }
}

/// Camera orientation for a viewpoint, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

/// Viewpoint → camera pose. Configurable because only the surgical view's
/// intent ("patient lying on the operating table") is given, not its angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewTable(pub BTreeMap<Viewpoint, CameraPose>);

impl Default for ViewTable {
    fn default() -> Self {
        let pose = |azimuth_deg, elevation_deg| CameraPose { azimuth_deg, elevation_deg };
        Self(BTreeMap::from([
            (Viewpoint::Anterior, pose(0.0, 0.0)),
            (Viewpoint::Posterior, pose(180.0, 0.0)),
            (Viewpoint::Left, pose(90.0, 0.0)),
            (Viewpoint::Right, pose(-90.0, 0.0)),
            (Viewpoint::Superior, pose(0.0, 90.0)),
            (Viewpoint::Inferior, pose(0.0, -90.0)),
            (Viewpoint::Surgical, pose(0.0, 60.0)),
        ]))
    }
}

impl ViewTable {
    pub fn pose(&self, v: Viewpoint) -> CameraPose {
        self.0.get(&v).copied().unwrap_or(CameraPose { azimuth_deg: 0.0, elevation_deg: 0.0 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureInfo {
    pub label: Structure,
    /// Millimetres, patient coordinates (x right, y anterior, z superior).
    pub centroid: [f64; 3],
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
    pub is_lobe: bool,
    #[serde(default)]
    pub contains_nodules: bool,
    /// Optional mesh path; accepted for the renderer, unused here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ArManifestError {
    #[error("duplicate structure {0:?}")]
    Duplicate(Structure),
    #[error("missing structure {0:?}")]
    Missing(Structure),
    #[error("centroid of {0:?} lies outside its bounding box")]
    CentroidOutside(Structure),
    #[error("is_lobe flag of {0:?} is wrong")]
    LobeFlag(Structure),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureManifest {
    pub structures: Vec<StructureInfo>,
    #[serde(default)]
    pub views: ViewTable,
}

impl Default for StructureManifest {
    /// Synthetic chest geometry with the nodule in the right lower lobe.
    fn default() -> Self {
        let info = |label, centroid, bbox_min, bbox_max, contains_nodules| StructureInfo {
            label,
            centroid,
            bbox_min,
            bbox_max,
            is_lobe: Structure::is_lobe(label),
            contains_nodules,
            mesh: None,
        };
        Self {
            structures: alloc::vec![
                info(Structure::Lll, [-70.0, -20.0, -45.0], [-120.0, -80.0, -90.0], [-30.0, 40.0, -5.0], false),
                info(Structure::Lul, [-70.0, 10.0, 50.0], [-120.0, -60.0, -20.0], [-30.0, 70.0, 110.0], false),
                info(Structure::Rll, [75.0, -20.0, -40.0], [30.0, -80.0, -90.0], [120.0, 40.0, 0.0], true),
                info(Structure::Rml, [75.0, 40.0, 10.0], [35.0, 0.0, -10.0], [115.0, 80.0, 30.0], false),
                info(Structure::Rul, [70.0, 0.0, 60.0], [30.0, -60.0, 20.0], [120.0, 60.0, 110.0], false),
                info(Structure::Nodules, [80.0, -30.0, -35.0], [70.0, -40.0, -45.0], [90.0, -20.0, -25.0], false),
                info(Structure::TracheaBronchia, [0.0, 10.0, 70.0], [-40.0, -10.0, 0.0], [40.0, 30.0, 140.0], false),
            ],
            views: ViewTable::default(),
        }
    }
}

impl StructureManifest {
    pub fn validate(&self) -> Result<(), ArManifestError> {
        let mut seen = BTreeSet::new();
        for s in &self.structures {
            if !seen.insert(s.label) {
                return Err(ArManifestError::Duplicate(s.label));
            }
            if s.is_lobe != s.label.is_lobe() {
                return Err(ArManifestError::LobeFlag(s.label));
            }
            let inside = (0..3).all(|i| s.bbox_min[i] <= s.centroid[i] && s.centroid[i] <= s.bbox_max[i]);
            if !inside {
                return Err(ArManifestError::CentroidOutside(s.label));
            }
        }
        match Structure::ALL.into_iter().find(|s| !seen.contains(s)) {
            Some(missing) => Err(ArManifestError::Missing(missing)),
            None => Ok(()),
        }
    }

    pub fn get(&self, label: Structure) -> Option<&StructureInfo> {
        self.structures.iter().find(|s| s.label == label)
    }

    /// Centre of the union of all bounding boxes.
    pub fn model_center(&self) -> [f64; 3] {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for s in &self.structures {
            for i in 0..3 {
                lo[i] = lo[i].min(s.bbox_min[i]);
                hi[i] = hi[i].max(s.bbox_max[i]);
            }
        }
        if self.structures.is_empty() {
            return [0.0; 3];
        }
        [0, 1, 2].map(|i| (lo[i] + hi[i]) / 2.0)
    }
}

/// Zoom parameters `z = (z_c, z_s, z_ℓ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zoom {
    pub center: [f64; 3],
    pub scale: f64,
    pub level: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArState {
    /// Whether the model is on screen at all.
    pub shown: bool,
    pub visible: BTreeSet<Structure>,
    pub view: Viewpoint,
    pub rotation: RotationMode,
    pub target: Option<Structure>,
    pub zoom: Zoom,
    pub zoom_stack: Vec<Zoom>,
}

impl ArState {
    /// Zoom invariants: `scale == 2^level`, `scale >= 1`, stack depth == level.
    pub fn zoom_consistent(&self) -> bool {
        self.zoom.scale >= 1.0
            && self.zoom.scale == libm::pow(2.0, f64::from(self.zoom.level))
            && self.zoom_stack.len() == self.zoom.level as usize
    }
}

/// Lobes holding nodules plus every non-lobe structure, surgical view, no zoom.
pub fn default_state(manifest: &StructureManifest) -> ArState {
    let visible = manifest
        .structures
        .iter()
        .filter(|s| !s.is_lobe || s.contains_nodules)
        .map(|s| s.label)
        .collect();
    ArState {
        shown: true,
        visible,
        view: Viewpoint::Surgical,
        rotation: RotationMode::Static,
        target: None,
        zoom: Zoom { center: manifest.model_center(), scale: 1.0, level: 0 },
        zoom_stack: Vec::new(),
    }
}

/// Session start: the default model, not yet displayed.
pub fn initial_state(manifest: &StructureManifest) -> ArState {
    ArState { shown: false, ..default_state(manifest) }
}

/// `(α ∪ add) \ remove`; removal wins.
pub fn update_structures(
    visible: &BTreeSet<Structure>,
    add: &BTreeSet<Structure>,
    remove: &BTreeSet<Structure>,
) -> BTreeSet<Structure> {
    visible.union(add).filter(|s| !remove.contains(s)).copied().collect()
}

pub fn zoom_in(state: &ArState, target: Structure, manifest: &StructureManifest) -> Result<ArState, AgentError> {
    let info = manifest.get(target).ok_or_else(|| AgentError::UnknownStructure(target.as_str().into()))?;
    let mut next = state.clone();
    next.zoom_stack.push(state.zoom);
    next.zoom = Zoom { center: info.centroid, scale: state.zoom.scale * 2.0, level: state.zoom.level + 1 };
    next.target = Some(target);
    Ok(next)
}

/// Pops the zoom stack; at scale 1.0 nothing changes.
pub fn zoom_out(state: &ArState) -> ArState {
    let mut next = state.clone();
    if let Some(prev) = next.zoom_stack.pop() {
        next.zoom = prev;
    }
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ArAction {
    StaticView,
    Rotate,
    ZoomIn,
    ZoomOut,
    Remove,
}

impl ArAction {
    pub const ALL: [(ArAction, &'static str); 5] = [
        (ArAction::StaticView, "STATIC_VIEW"),
        (ArAction::Rotate, "ROTATE"),
        (ArAction::ZoomIn, "ZOOM_IN"),
        (ArAction::ZoomOut, "ZOOM_OUT"),
        (ArAction::Remove, "REMOVE"),
    ];

    pub fn as_str(self) -> &'static str {
        Self::ALL.iter().find(|(a, _)| *a == self).map(|(_, n)| *n).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArDecision {
    pub action: ArAction,
    pub params: ArParams,
}

/// Decoded parameters; also the scoring view.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArParams {
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub add: BTreeSet<Structure>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub remove: BTreeSet<Structure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view: Option<Viewpoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<RotationMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Structure>,
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub reset: bool,
}

const SYSTEM_PROMPT: &str = "You are the anatomy rendering agent of a surgical assistant that overlays a 3D lung model. \
Structures: LLL, LUL, RLL, RML, RUL, nodules, trachea_bronchia (\"airway\" = trachea_bronchia, \
\"right lung\" = RUL, RML, RLL, \"left lung\" = LUL, LLL). \
Actions: STATIC_VIEW (show the model, optionally adding/removing structures or changing the view), \
ROTATE (rotation left, right, up, down, horizontal or vertical), ZOOM_IN (on a target structure), ZOOM_OUT, \
REMOVE (hide the model). Views: anterior, posterior, left, right, superior, inferior, surgical. \
\"Reset\" or \"Initialize\" sets reset to true. A zoom in with no named structure targets the current target, \
or the nodules if there is none. A zoom combined with a rotation keeps the zoom action and adds the rotation. Only include parameters the command asks for. \
Answer only with JSON: {\"action_probs\": {\"STATIC_VIEW\": p, \"ROTATE\": p, \"ZOOM_IN\": p, \"ZOOM_OUT\": p, \"REMOVE\": p}, \
\"add\": [...], \"remove\": [...], \"view\": v or null, \"rotation\": r or null, \"target\": s or null, \"reset\": bool}.";

fn user_prompt(cmd: &str, state: &ArState) -> String {
    format!("Current state: {}\nCommand: {}\n", state_json(state), cmd)
}

fn structures_of(obj: &Map<String, Value>, key: &str) -> Result<BTreeSet<Structure>, AgentError> {
    let mut out = BTreeSet::new();
    for name in get_strings(obj, key) {
        out.extend(resolve_structures(&name)?);
    }
    Ok(out)
}

fn is_null_word(s: &str) -> bool {
    matches!(normalize(s).as_str(), "null" | "none" | "")
}

/// Reads an AR decision object.
pub fn decode_ar_decision(obj: &Map<String, Value>) -> Result<ArDecision, AgentError> {
    let action = pick_action(obj, &ArAction::ALL)?;
    let mut params = ArParams {
        add: structures_of(obj, "add")?,
        remove: structures_of(obj, "remove")?,
        reset: get_bool(obj, "reset"),
        ..Default::default()
    };
    if let Some(v) = get_str(obj, "view").filter(|v| !is_null_word(v)) {
        params.view = Some(Viewpoint::parse(v).ok_or_else(|| AgentError::BadValue { field: "view", value: v.into() })?);
    }
    if let Some(r) = get_str(obj, "rotation").filter(|r| !is_null_word(r)) {
        params.rotation =
            Some(RotationMode::parse(r).ok_or_else(|| AgentError::BadValue { field: "rotation", value: r.into() })?);
    }
    if let Some(t) = get_str(obj, "target").filter(|t| !is_null_word(t)) {
        match resolve_structures(t)?.as_slice() {
            [one] => params.target = Some(*one),
            _ => return Err(AgentError::BadValue { field: "target", value: t.to_string() }),
        }
    }
    Ok(ArDecision { action, params })
}

pub fn determine_action_ar(cmd: &str, state: &ArState, backend: &mut dyn ChatBackend) -> Result<ArDecision, AgentError> {
    let obj = ask_object(backend, SYSTEM_PROMPT, user_prompt(cmd, state), super::agent_label(AgentId::Ar, cmd))?;
    decode_ar_decision(&obj)
}

fn scene(state: &ArState, manifest: &StructureManifest, angle_deg: f64, zoom: Zoom) -> Payload {
    Payload::Scene3d(ScenePayload {
        visible: state.visible.clone(),
        view: state.view,
        camera: manifest.views.pose(state.view),
        rotation: state.rotation,
        angle_deg,
        zoom_center: zoom.center,
        zoom_scale: zoom.scale,
        zoom_level: zoom.level,
    })
}

/// Still scene for a state as it stands.
pub fn scene_of(state: &ArState, manifest: &StructureManifest) -> Payload {
    scene(state, manifest, 0.0, state.zoom)
}

fn zoom_timeline(
    state: &ArState,
    from: Zoom,
    manifest: &StructureManifest,
    fps: u32,
) -> Result<OverlayTimeline, AgentError> {
    let to = state.zoom;
    let pack = |z: Zoom| [z.center[0], z.center[1], z.center[2], z.scale];
    let samples = interpolate_linear(&pack(from), &pack(to), ZOOM_SECONDS, fps)?;
    let payloads = samples
        .iter()
        .map(|v| scene(state, manifest, 0.0, Zoom { center: [v[0], v[1], v[2]], scale: v[3], level: to.level }))
        .collect();
    Ok(OverlayTimeline::animated(fps, Anchor::UpperRight, payloads))
}

/// Composite "zoom ... and rotate ...": the rotation starts when the zoom ends.
fn then_rotate(
    mut state: ArState,
    mut tl: OverlayTimeline,
    rotation: Option<RotationMode>,
    manifest: &StructureManifest,
    fps: u32,
) -> Result<(ArState, OverlayTimeline), AgentError> {
    let Some(mode) = rotation.filter(|r| *r != RotationMode::Static) else {
        return Ok((state, tl));
    };
    state.rotation = mode;
    let payloads = rotation_profile(mode, fps)?.into_iter().map(|a| scene(&state, manifest, a, state.zoom)).collect();
    let offset = tl.keyframes.last().map_or(0.0, |k| k.t_s);
    if let Some(last) = tl.keyframes.last_mut() {
        last.directive.span.1 = offset + 1.0 / f64::from(fps);
    }
    tl.append(OverlayTimeline::animated(fps, Anchor::UpperRight, payloads), offset);
    Ok((state, tl))
}

/// Applies a decision: structure edits and view first, then the action.
///
/// ZOOM_IN and ZOOM_OUT may carry a rotation, which plays after the zoom.
pub fn apply_ar(
    state: &ArState,
    decision: &ArDecision,
    manifest: &StructureManifest,
    fps: u32,
) -> Result<(ArState, OverlayTimeline), AgentError> {
    let p = &decision.params;
    let base = if p.reset { default_state(manifest) } else { state.clone() };
    let mut next = base.clone();
    if decision.action == ArAction::Remove {
        next.shown = false;
        next.rotation = RotationMode::Static;
        let clear = OverlayDirective::hold(Anchor::UpperRight, Payload::ClearOverlay);
        return Ok((next, OverlayTimeline::still(fps, clear)));
    }
    next.shown = true;
    next.visible = update_structures(&base.visible, &p.add, &p.remove);
    if let Some(v) = p.view {
        next.view = v;
    }
    match decision.action {
        ArAction::StaticView => {
            next.rotation = RotationMode::Static;
            let still = OverlayDirective::hold(Anchor::UpperRight, scene(&next, manifest, 0.0, next.zoom));
            Ok((next, OverlayTimeline::still(fps, still)))
        }
        ArAction::Rotate => {
            let mode = p.rotation.filter(|r| *r != RotationMode::Static).ok_or(AgentError::MissingRotation)?;
            next.rotation = mode;
            let payloads = rotation_profile(mode, fps)?
                .into_iter()
                .map(|a| scene(&next, manifest, a, next.zoom))
                .collect();
            Ok((next, OverlayTimeline::animated(fps, Anchor::UpperRight, payloads)))
        }
        ArAction::ZoomIn => {
            let target = p.target.or(base.target).ok_or(AgentError::MissingTarget)?;
            next.rotation = RotationMode::Static;
            let from = next.zoom;
            let zoomed = zoom_in(&next, target, manifest)?;
            let tl = zoom_timeline(&zoomed, from, manifest, fps)?;
            then_rotate(zoomed, tl, p.rotation, manifest, fps)
        }
        ArAction::ZoomOut => {
            next.rotation = RotationMode::Static;
            let from = next.zoom;
            let out = zoom_out(&next);
            let tl = if out.zoom == from {
                OverlayTimeline::still(fps, OverlayDirective::hold(Anchor::UpperRight, scene(&out, manifest, 0.0, out.zoom)))
            } else {
                zoom_timeline(&out, from, manifest, fps)?
            };
            then_rotate(out, tl, p.rotation, manifest, fps)
        }
        ArAction::Remove => unreachable!("handled above"),
    }
}

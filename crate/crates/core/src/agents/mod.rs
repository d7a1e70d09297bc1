//! Task-specific agents.
//!
//! Each agent has an action-determination step that asks the LLM for an
//! action plus parameters, and a pure state transition that turns the
//! decision into new agent state and an overlay timeline.

pub mod ar;
pub mod ir;
pub mod iv;
pub mod volume;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::llm::{extract_json_object, ChatBackend, ChatRequest, LlmError, ParseError};
use crate::model::{AgentId, AgentState};
use crate::timeline::{Anchor, OverlayDirective, OverlayTimeline, Payload, TimelineError, DEFAULT_FPS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("unknown structure {0:?}")]
    UnknownStructure(String),
    #[error("unknown plane {0:?}")]
    UnknownPlane(String),
    #[error("unrecognised value {value:?} for `{field}`")]
    BadValue { field: &'static str, value: String },
    #[error("zoom in needs a target structure")]
    MissingTarget,
    #[error("rotate needs a rotation direction")]
    MissingRotation,
    #[error(transparent)]
    Timeline(#[from] TimelineError),
}

/// Resolved decision parameters, in the shape used for scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentParams {
    Ir(ir::IrParams),
    Iv(iv::IvParams),
    Ar(ar::ArParams),
}

impl AgentParams {
    /// Reads annotated parameters in the shape of `agent`'s params type.
    pub fn from_gold(agent: AgentId, value: &Value) -> Result<Self, serde_json::Error> {
        let value = if value.is_null() { Value::Object(Map::new()) } else { value.clone() };
        Ok(match agent {
            AgentId::Ir => AgentParams::Ir(serde_json::from_value(value)?),
            AgentId::Iv => AgentParams::Iv(serde_json::from_value(value)?),
            AgentId::Ar => AgentParams::Ar(serde_json::from_value(value)?),
        })
    }

    pub fn agent(&self) -> AgentId {
        match self {
            AgentParams::Ir(_) => AgentId::Ir,
            AgentParams::Iv(_) => AgentId::Iv,
            AgentParams::Ar(_) => AgentId::Ar,
        }
    }
}

/// Action names an agent can produce, as written in prompts and datasets.
pub fn action_names(agent: AgentId) -> Vec<&'static str> {
    match agent {
        AgentId::Ir => [ir::IrAction::Show, ir::IrAction::Hide].iter().map(|a| a.as_str()).collect(),
        AgentId::Iv => iv::IvAction::ALL.iter().map(|(_, n)| *n).collect(),
        AgentId::Ar => ar::ArAction::ALL.iter().map(|(_, n)| *n).collect(),
    }
}

/// The model reply that decodes to `action` with `params`.
///
/// Inverse of the agent decoders; used to script deterministic backends
/// from annotated data.
pub fn encode_reply(action: &str, params: &AgentParams) -> String {
    let mut obj = Map::new();
    obj.insert("action".into(), Value::String(action.into()));
    let body = match params {
        AgentParams::Ir(p) => {
            let fields: Map<String, Value> = p.fields.iter().map(|f| (f.clone(), Value::from(0.9))).collect();
            let mut m = Map::new();
            m.insert("fields".into(), Value::Object(fields));
            m
        }
        AgentParams::Iv(p) => as_object(serde_json::to_value(p)),
        AgentParams::Ar(p) => as_object(serde_json::to_value(p)),
    };
    obj.extend(body);
    Value::Object(obj).to_string()
}

fn as_object(v: Result<Value, serde_json::Error>) -> Map<String, Value> {
    match v {
        Ok(Value::Object(m)) => m,
        _ => Map::new(),
    }
}

/// What a task agent did in one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub agent: AgentId,
    /// Action name as written in prompts (`SHOW`, `ZOOM_IN_MOVE`, ...).
    pub action: String,
    pub params: AgentParams,
    pub timeline: OverlayTimeline,
    /// True when the command was a "Select {agent}" continuation and no action ran.
    #[serde(default)]
    pub restored: bool,
}

/// Read-only data the agents work against.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentResources {
    pub ir_manifest: ir::ColumnManifest,
    pub record: ir::PatientRecord,
    pub ir_threshold: f64,
    pub bounds: iv::SliceBounds,
    pub ar_manifest: ar::StructureManifest,
    pub fps: u32,
}

impl Default for AgentResources {
    fn default() -> Self {
        Self {
            ir_manifest: ir::ColumnManifest::default(),
            record: ir::sample_record(),
            ir_threshold: ir::DEFAULT_THRESHOLD,
            bounds: iv::SliceBounds::default(),
            ar_manifest: ar::StructureManifest::default(),
            fps: DEFAULT_FPS,
        }
    }
}

/// State an agent starts a session with.
pub fn initial_state(agent: AgentId, res: &AgentResources) -> AgentState {
    match agent {
        AgentId::Ir => AgentState::Ir(ir::IrState::empty(&res.ir_manifest)),
        AgentId::Iv => AgentState::Iv(iv::IvState::initial(&res.bounds)),
        AgentId::Ar => AgentState::Ar(ar::initial_state(&res.ar_manifest)),
    }
}

/// A still timeline showing `state` as it is.
pub fn render_state(state: &AgentState, res: &AgentResources) -> OverlayTimeline {
    let directive = match state {
        AgentState::Ir(s) if s.s.is_empty() => OverlayDirective::hold(Anchor::TopRight, Payload::ClearOverlay),
        AgentState::Ir(s) => OverlayDirective::hold(Anchor::TopRight, Payload::TextOverlay { text: s.s.clone() }),
        AgentState::Iv(s) => {
            let anchor = if s.mode == iv::DisplayMode::ZoomView { Anchor::Center } else { Anchor::RightSide };
            OverlayDirective::hold(anchor, Payload::for_ct(s.mode, s.positions, s.view.unwrap_or(iv::Plane::Axial)))
        }
        AgentState::Ar(s) if !s.shown => OverlayDirective::hold(Anchor::UpperRight, Payload::ClearOverlay),
        AgentState::Ar(s) => OverlayDirective::hold(Anchor::UpperRight, ar::scene_of(s, &res.ar_manifest)),
    };
    OverlayTimeline::still(res.fps, directive)
}

fn empty_params(agent: AgentId) -> AgentParams {
    match agent {
        AgentId::Ir => AgentParams::Ir(ir::IrParams::default()),
        AgentId::Iv => AgentParams::Iv(iv::IvParams::default()),
        AgentId::Ar => AgentParams::Ar(ar::ArParams::default()),
    }
}

/// Action name recorded for "Select {agent}" continuations.
pub const SELECT_ACTION: &str = "SELECT";

/// Runs one agent on a revised command.
///
/// A "Select {agent}" command re-emits the current state without asking
/// the model. Otherwise the agent decides an action and applies it.
pub fn execute(
    agent: AgentId,
    command: &str,
    state: Option<&AgentState>,
    res: &AgentResources,
    backend: &mut dyn ChatBackend,
) -> Result<(AgentState, AgentOutcome), AgentError> {
    let current = match state {
        Some(s) if s.agent() == agent => s.clone(),
        _ => initial_state(agent, res),
    };
    if crate::stages::parse_select_command(command) == Some(agent) {
        let timeline = render_state(&current, res);
        let outcome =
            AgentOutcome { agent, action: SELECT_ACTION.into(), params: empty_params(agent), timeline, restored: true };
        return Ok((current, outcome));
    }
    let (next, action, params, timeline) = match &current {
        AgentState::Ir(s) => {
            let d = ir::determine_action_ir(command, &res.ir_manifest, s, backend)?;
            let (next, directive) = ir::apply_ir(&d, &res.ir_manifest, &res.record, res.ir_threshold);
            let params = AgentParams::Ir(ir::params_of(&d, res.ir_threshold, &res.ir_manifest));
            (AgentState::Ir(next), d.action.as_str(), params, OverlayTimeline::still(res.fps, directive))
        }
        AgentState::Iv(s) => {
            let d = iv::determine_action_iv(command, s, &res.bounds, backend)?;
            let (next, tl) = iv::apply_iv(s, &d, &res.bounds, res.fps)?;
            (AgentState::Iv(next), d.action.as_str(), AgentParams::Iv(iv::params_of(&d)), tl)
        }
        AgentState::Ar(s) => {
            let d = ar::determine_action_ar(command, s, backend)?;
            let (next, tl) = ar::apply_ar(s, &d, &res.ar_manifest, res.fps)?;
            (AgentState::Ar(next), d.action.as_str(), AgentParams::Ar(d.params.clone()), tl)
        }
    };
    Ok((next, AgentOutcome { agent, action: action.into(), params, timeline, restored: false }))
}

/// Sends one agent request and returns the first JSON object of the reply.
pub(crate) fn ask_object(
    backend: &mut dyn ChatBackend,
    system: &str,
    user: String,
    label: String,
) -> Result<Map<String, Value>, AgentError> {
    let req = ChatRequest::new(system, user).with_label(label);
    let reply = backend.chat(&req)?;
    let cleaned = reply.text.replace("```json", "").replace("```", "");
    let raw = extract_json_object(&cleaned)?;
    match serde_json::from_str::<Value>(raw) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(ParseError::NoJsonObject.into()),
        Err(e) => Err(ParseError::InvalidJson(e.to_string()).into()),
    }
}

fn action_key(s: &str) -> String {
    s.trim().to_ascii_uppercase().replace([' ', '-'], "_")
}

/// Picks an action from `"action": NAME` or from an `"action_probs"` map.
///
/// With probabilities the highest wins; ties go to the earliest variant in
/// `variants`.
pub(crate) fn pick_action<A: Copy>(obj: &Map<String, Value>, variants: &[(A, &str)]) -> Result<A, AgentError> {
    if let Some(Value::Object(probs)) = obj.get("action_probs") {
        let mut best: Option<(A, f64)> = None;
        for (a, name) in variants {
            let p = probs
                .iter()
                .find(|(k, _)| action_key(k) == *name)
                .and_then(|(_, v)| v.as_f64())
                .unwrap_or(0.0);
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((*a, p));
            }
        }
        if let Some((a, p)) = best {
            if p > 0.0 {
                return Ok(a);
            }
        }
    }
    let name = obj.get("action").and_then(Value::as_str).ok_or(ParseError::MissingField("action".into()))?;
    let key = action_key(name);
    variants
        .iter()
        .find(|(_, n)| *n == key)
        .map(|(a, _)| *a)
        .ok_or_else(|| AgentError::UnknownAction(name.into()))
}

pub(crate) fn get_bool(obj: &Map<String, Value>, key: &str) -> bool {
    match obj.get(key) {
        Some(Value::Bool(b)) => *b,
        Some(Value::String(s)) => matches!(crate::text::normalize(s).as_str(), "true" | "yes"),
        _ => false,
    }
}

/// Reads a string or an array of strings.
pub(crate) fn get_strings(obj: &Map<String, Value>, key: &str) -> Vec<String> {
    match obj.get(key) {
        Some(Value::String(s)) if !s.trim().is_empty() => alloc::vec![s.clone()],
        Some(Value::Array(items)) => items.iter().filter_map(|v| v.as_str().map(String::from)).collect(),
        _ => Vec::new(),
    }
}

pub(crate) fn get_str<'a>(obj: &'a Map<String, Value>, key: &str) -> Option<&'a str> {
    obj.get(key).and_then(Value::as_str).map(str::trim).filter(|s| !s.is_empty())
}

pub(crate) fn state_json<T: Serialize>(state: &T) -> String {
    serde_json::to_string(state).unwrap_or_else(|_| "{}".into())
}

/// Mock-script routing label of an agent request.
pub fn agent_label(agent: AgentId, command: &str) -> String {
    format!("{}:{}", agent.as_str(), command)
}

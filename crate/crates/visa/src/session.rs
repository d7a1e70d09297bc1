//! One interactive session: state, backend and stages kept across clips.

use std::sync::Arc;

use serde::Serialize;
use visa_core::agents::{render_state, AgentOutcome};
use visa_core::llm::ChatBackend;
use visa_core::orchestrator::engine::{run_clip, EngineError, Resources, StageRegistry, WorkflowTrace};
use visa_core::stages::{FixtureSource, Transcript};
use visa_core::timeline::OverlayTimeline;
use visa_core::{AgentId, AgentState, SessionState, Status};

pub type BoxedBackend = Box<dyn ChatBackend + Send>;

/// Result of one submitted utterance (one clip).
#[derive(Debug, Clone, Serialize)]
pub struct ClipReply {
    pub clip: u32,
    pub transcript: Option<String>,
    pub revised: Option<String>,
    pub valid: Option<bool>,
    pub agent: Option<AgentId>,
    pub outcome: Option<AgentOutcome>,
    /// State of the agent that acted, after acting.
    pub agent_state: Option<AgentState>,
    /// Overlay to draw for this clip; `None` when no agent acted.
    pub timeline: Option<OverlayTimeline>,
    pub trace: WorkflowTrace,
}

/// Snapshot returned by the state endpoint.
#[derive(Debug, Clone, Serialize)]
pub struct SessionView<'a> {
    pub id: &'a str,
    pub clip: u32,
    pub status: Status,
    pub state: &'a SessionState,
    /// Current overlay of every agent that has state.
    pub overlays: Vec<(AgentId, OverlayTimeline)>,
}

pub struct Session {
    pub id: String,
    pub state: SessionState,
    backend: BoxedBackend,
    registry: StageRegistry,
    resources: Arc<Resources>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session").field("id", &self.id).field("clip", &self.state.clip.index).finish_non_exhaustive()
    }
}

impl Session {
    pub fn new(id: impl Into<String>, backend: BoxedBackend, resources: Arc<Resources>, ic_max: u32) -> Self {
        Self { id: id.into(), state: SessionState::new(ic_max), backend, registry: StageRegistry::standard(), resources }
    }

    /// Runs one clip on `transcript` and opens the next clip.
    ///
    /// An invalid command ends its clip (the next utterance is the
    /// retry). On a backend error the session is left unchanged.
    pub fn submit(&mut self, transcript: Transcript) -> Result<ClipReply, EngineError> {
        let before = self.state.clone();
        let text = transcript.text.clone();
        let mut source = FixtureSource::new([transcript]);
        let run = match run_clip(&mut self.state, &mut self.backend, &mut source, &mut self.registry, &self.resources) {
            Ok(run) => run,
            Err(e) => {
                self.state = before;
                return Err(e);
            }
        };
        let validation = run.record.final_validation();
        let reply = ClipReply {
            clip: run.trace.clip,
            transcript: text,
            revised: validation.map(|v| v.revised.clone()),
            valid: validation.map(|v| v.valid),
            agent: run.record.choice.as_ref().map(|c| c.agent),
            agent_state: run.record.outcome.as_ref().and_then(|o| self.state.agent_states.get(&o.agent).cloned()),
            timeline: run.record.outcome.as_ref().map(|o| o.timeline.clone()),
            outcome: run.record.outcome.clone(),
            trace: run.trace,
        };
        self.state.advance_clip();
        Ok(reply)
    }

    /// Forgets memory and agent states; the backend is kept.
    pub fn reset(&mut self) {
        self.state = SessionState::new(self.state.ic_max);
    }

    pub fn view(&self) -> SessionView<'_> {
        let overlays =
            self.state.agent_states.iter().map(|(a, s)| (*a, render_state(s, &self.resources.agents))).collect();
        SessionView { id: &self.id, clip: self.state.clip.index, status: self.state.status, state: &self.state, overlays }
    }
}

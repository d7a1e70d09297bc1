//! Session, memory and clip types shared across the engine.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::agents::ar::ArState;
use crate::agents::ir::IrState;
use crate::agents::iv::IvState;

/// Length of one clip. Each clip carries at most one command.
pub const CLIP_SECONDS: f64 = 10.0;

/// Default number of global-memory entries shown to the LLM.
pub const MEMORY_WINDOW: usize = 3;

/// Default number of invalid loops tolerated before a clip is abandoned.
pub const DEFAULT_IC_MAX: u32 = 3;

/// A 10-second slice of the surgical video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipRef {
    pub index: u32,
    pub start_s: f64,
    pub duration_s: f64,
}

impl ClipRef {
    pub fn new(index: u32) -> Self {
        Self { index, start_s: f64::from(index) * CLIP_SECONDS, duration_s: CLIP_SECONDS }
    }

    pub fn next(&self) -> Self {
        Self::new(self.index + 1)
    }
}

/// Every function the orchestrator can schedule.
///
/// Declaration order is the canonical order used to break probability ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionId {
    RealTimeAudio,
    Stt,
    CorrectValidate,
    CommandReasoning,
    IrAgent,
    IvAgent,
    ArAgent,
    End,
}

impl FunctionId {
    pub const ALL: [FunctionId; 8] = [
        FunctionId::RealTimeAudio,
        FunctionId::Stt,
        FunctionId::CorrectValidate,
        FunctionId::CommandReasoning,
        FunctionId::IrAgent,
        FunctionId::IvAgent,
        FunctionId::ArAgent,
        FunctionId::End,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FunctionId::RealTimeAudio => "real_time_audio",
            FunctionId::Stt => "stt",
            FunctionId::CorrectValidate => "correct_validate",
            FunctionId::CommandReasoning => "command_reasoning",
            FunctionId::IrAgent => "ir_agent",
            FunctionId::IvAgent => "iv_agent",
            FunctionId::ArAgent => "ar_agent",
            FunctionId::End => "end",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == name)
    }

    pub fn agent(self) -> Option<AgentId> {
        match self {
            FunctionId::IrAgent => Some(AgentId::Ir),
            FunctionId::IvAgent => Some(AgentId::Iv),
            FunctionId::ArAgent => Some(AgentId::Ar),
            _ => None,
        }
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The three task-specific agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgentId {
    #[serde(rename = "ir_agent", alias = "ir", alias = "IR")]
    Ir,
    #[serde(rename = "iv_agent", alias = "iv", alias = "IV")]
    Iv,
    #[serde(rename = "ar_agent", alias = "ar", alias = "AR")]
    Ar,
}

impl AgentId {
    pub const ALL: [AgentId; 3] = [AgentId::Ir, AgentId::Iv, AgentId::Ar];

    pub fn function(self) -> FunctionId {
        match self {
            AgentId::Ir => FunctionId::IrAgent,
            AgentId::Iv => FunctionId::IvAgent,
            AgentId::Ar => FunctionId::ArAgent,
        }
    }

    pub fn as_str(self) -> &'static str {
        self.function().as_str()
    }

    /// Short dataset label: `ir`, `iv` or `ar`.
    pub fn short(self) -> &'static str {
        match self {
            AgentId::Ir => "ir",
            AgentId::Iv => "iv",
            AgentId::Ar => "ar",
        }
    }

    /// Name used in "Select {agent name}" revisions and prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            AgentId::Ir => "information retrieval agent",
            AgentId::Iv => "image viewer agent",
            AgentId::Ar => "anatomy rendering agent",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            AgentId::Ir => {
                "Shows or hides patient clinical information (demographics, body measurements, diagnosis, \
                 comorbidities, pulmonary function tests, surgery and tumor information) as text on the video."
            }
            AgentId::Iv => {
                "Shows, moves, zooms in on, zooms out of, or removes the axial, coronal and sagittal CT views."
            }
            AgentId::Ar => {
                "Shows the 3D anatomy model (lung lobes, nodules, trachea/bronchia); adds or removes structures, \
                 changes the viewpoint, rotates, zooms in on a structure, zooms out, or removes the model."
            }
        }
    }

    /// Accepts `ir_agent`, `ir`, `IR`, or the display name.
    pub fn parse(name: &str) -> Option<Self> {
        let n = crate::text::normalize(name);
        AgentId::ALL.into_iter().find(|a| {
            n == a.as_str().replace('_', " ") || n == a.short() || n == a.display_name() || n == a.as_str()
        })
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Orchestrator status cue shown in the planning prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Status {
    #[serde(rename = "No audio recorded")]
    NoAudioRecorded,
    #[serde(rename = "Last command invalid, need new input")]
    LastCommandInvalid,
    #[serde(rename = "Agent completed, workflow finished")]
    AgentCompleted,
    #[serde(rename = "Command transcribed")]
    CommandTranscribed,
    #[serde(rename = "Command valid")]
    CommandValid,
    #[serde(rename = "Agent selected")]
    AgentSelected,
    #[serde(rename = "Idle")]
    Idle,
    #[serde(rename = "Audio recorded")]
    AudioRecorded,
}

impl Status {
    pub const ALL: [Status; 8] = [
        Status::NoAudioRecorded,
        Status::LastCommandInvalid,
        Status::AgentCompleted,
        Status::CommandTranscribed,
        Status::CommandValid,
        Status::AgentSelected,
        Status::Idle,
        Status::AudioRecorded,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Status::NoAudioRecorded => "No audio recorded",
            Status::LastCommandInvalid => "Last command invalid, need new input",
            Status::AgentCompleted => "Agent completed, workflow finished",
            Status::CommandTranscribed => "Command transcribed",
            Status::CommandValid => "Command valid",
            Status::AgentSelected => "Agent selected",
            Status::Idle => "Idle",
            Status::AudioRecorded => "Audio recorded",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub revised: String,
    pub agent: AgentId,
}

/// Session-wide history of revised commands and the agents that ran them.
///
/// Append-only; readers only ever see a short window of the newest entries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalMemory {
    history: Vec<MemoryEntry>,
}

impl GlobalMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// The `k` newest entries, oldest first.
    pub fn window(&self, k: usize) -> &[MemoryEntry] {
        let start = self.history.len().saturating_sub(k);
        &self.history[start..]
    }

    /// Records a revised command. Empty commands are not stored.
    pub fn append(&mut self, revised: impl Into<String>, agent: AgentId) {
        let revised = revised.into();
        if revised.trim().is_empty() {
            log::warn!("ignoring empty revised command for {agent}");
            return;
        }
        self.history.push(MemoryEntry { revised, agent });
    }

    pub fn last_agent(&self) -> Option<AgentId> {
        self.history.last().map(|e| e.agent)
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.history
    }

    /// Renders the window the way the stage prompts embed it.
    pub fn render_window(&self, k: usize) -> String {
        let window = self.window(k);
        if window.is_empty() {
            return String::from("(no previous commands)");
        }
        let mut out = String::new();
        for (i, e) in window.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&alloc::format!("{}. \"{}\" -> {}", i + 1, e.revised, e.agent));
        }
        out
    }
}

/// Per-agent state, persisted across clips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "agent", rename_all = "snake_case")]
pub enum AgentState {
    Ir(IrState),
    Iv(IvState),
    Ar(ArState),
}

impl AgentState {
    pub fn agent(&self) -> AgentId {
        match self {
            AgentState::Ir(_) => AgentId::Ir,
            AgentState::Iv(_) => AgentId::Iv,
            AgentState::Ar(_) => AgentId::Ar,
        }
    }
}

/// What happened inside one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMemory {
    pub clip: ClipRef,
    pub raw_command: Option<String>,
    pub revised_command: Option<String>,
    pub valid: Option<bool>,
    pub agent: Option<AgentId>,
    pub agent_state_snapshot: Option<AgentState>,
}

impl LocalMemory {
    pub fn new(clip: ClipRef) -> Self {
        Self { clip, raw_command: None, revised_command: None, valid: None, agent: None, agent_state_snapshot: None }
    }
}

/// Full mutable state of one session (one patient, one video).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub clip: ClipRef,
    pub local: LocalMemory,
    pub global: GlobalMemory,
    pub status: Status,
    pub invalid_cycles: u32,
    pub ic_max: u32,
    pub current_function: FunctionId,
    pub agent_states: BTreeMap<AgentId, AgentState>,
    /// Local memories of finished clips, oldest first.
    pub history: Vec<LocalMemory>,
}

impl Default for SessionState {
    fn default() -> Self {
        Self::new(DEFAULT_IC_MAX)
    }
}

impl SessionState {
    pub fn new(ic_max: u32) -> Self {
        let clip = ClipRef::new(0);
        Self {
            clip,
            local: LocalMemory::new(clip),
            global: GlobalMemory::new(),
            status: Status::Idle,
            invalid_cycles: 0,
            ic_max,
            current_function: FunctionId::End,
            agent_states: BTreeMap::new(),
            history: Vec::new(),
        }
    }

    /// Closes the current clip and opens the next one.
    pub fn advance_clip(&mut self) {
        let next = self.clip.next();
        let done = core::mem::replace(&mut self.local, LocalMemory::new(next));
        self.history.push(done);
        self.clip = next;
        self.status = Status::Idle;
        self.invalid_cycles = 0;
        self.current_function = FunctionId::End;
    }

    /// Agent chosen for the current clip, if reasoning has run.
    pub fn selected_agent(&self) -> Option<AgentId> {
        self.local.agent
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    #[test]
    fn clip_ref_is_ten_seconds() {
        let c = ClipRef::new(7);
        assert_eq!(c.duration_s, 10.0);
        assert_eq!(c.start_s, 70.0);
        assert_eq!(c.next().start_s, 80.0);
    }

    #[test]
    fn window_on_empty_history() {
        assert!(GlobalMemory::new().window(3).is_empty());
    }

    #[test]
    fn window_with_fewer_entries_than_k() {
        let mut g = GlobalMemory::new();
        g.append("Show CT views", AgentId::Iv);
        assert_eq!(g.window(3), &[MemoryEntry { revised: "Show CT views".into(), agent: AgentId::Iv }]);
    }

    #[test]
    fn window_of_five_returns_last_three_in_order() {
        let mut g = GlobalMemory::new();
        let cmds = ["a", "b", "c", "d", "e"];
        for (i, c) in cmds.iter().enumerate() {
            g.append(*c, AgentId::ALL[i % 3]);
        }
        let w: Vec<_> = g.window(3).iter().map(|e| (e.revised.as_str(), e.agent)).collect();
        assert_eq!(w, [("c", AgentId::Ar), ("d", AgentId::Ir), ("e", AgentId::Iv)]);
    }

    #[test]
    fn append_ten_then_window() {
        let mut g = GlobalMemory::new();
        for i in 1..=10 {
            g.append(format!("cmd {i}"), AgentId::Ar);
        }
        let w: Vec<_> = g.window(3).iter().map(|e| e.revised.clone()).collect();
        assert_eq!(w, ["cmd 8", "cmd 9", "cmd 10"]);
        assert_eq!(g.len(), 10);
    }

    #[test]
    fn append_preserves_order_and_skips_empty() {
        let mut g = GlobalMemory::new();
        g.append("first", AgentId::Ir);
        g.append("   ", AgentId::Ir);
        g.append("second", AgentId::Iv);
        assert_eq!(g.len(), 2);
        assert_eq!(g.entries()[0].revised, "first");
        assert_eq!(g.last_agent(), Some(AgentId::Iv));
    }

    #[test]
    fn canonical_function_order() {
        let mut sorted = FunctionId::ALL;
        sorted.sort();
        assert_eq!(sorted, FunctionId::ALL);
        for f in FunctionId::ALL {
            assert_eq!(FunctionId::parse(f.as_str()), Some(f));
        }
    }

    #[test]
    fn status_strings_are_exact() {
        assert_eq!(Status::NoAudioRecorded.as_str(), "No audio recorded");
        assert_eq!(Status::LastCommandInvalid.as_str(), "Last command invalid, need new input");
        assert_eq!(Status::AgentCompleted.as_str(), "Agent completed, workflow finished");
        for s in Status::ALL {
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.as_str()));
        }
    }

    #[test]
    fn agent_names_parse() {
        assert_eq!(AgentId::parse("iv_agent"), Some(AgentId::Iv));
        assert_eq!(AgentId::parse("IR"), Some(AgentId::Ir));
        assert_eq!(AgentId::parse("Anatomy Rendering Agent"), Some(AgentId::Ar));
        assert_eq!(AgentId::parse("ar agent"), Some(AgentId::Ar));
        assert_eq!(AgentId::parse("surgeon"), None);
    }

    #[test]
    fn advance_clip_resets_counters() {
        let mut s = SessionState { invalid_cycles: 2, status: Status::AgentCompleted, ..SessionState::default() };
        s.local.raw_command = Some("Zoom in".into());
        s.advance_clip();
        assert_eq!(s.invalid_cycles, 0);
        assert_eq!(s.status, Status::Idle);
        assert_eq!(s.clip.index, 1);
        assert_eq!(s.history.len(), 1);
        assert_eq!(s.local.raw_command, None);
    }
}

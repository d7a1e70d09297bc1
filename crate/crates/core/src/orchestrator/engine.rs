//! Clip execution: the stage registry and the step loop.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::{
    apply_decision_rules, build_orchestrator_prompt, complete_missing_functions, follows_grammar, orchestrator_label,
    select_next_function, FunctionProposal, ProposalSource, RuleOutcome,
};
use crate::agents::{self, AgentError, AgentOutcome, AgentResources};
use crate::llm::{parse_probability_json, ChatBackend, ChatRequest, LlmError};
use crate::model::{AgentId, FunctionId, SessionState, Status};
use crate::stages::{
    correct_and_validate, reason_agent, AgentChoice, CommandVocabulary, CorrectionRules, IntakeError, ReasonError,
    StageContext, Transcript, TranscriptSource, ValidationResult,
};

const ORCHESTRATOR_SYSTEM: &str = "You are the orchestrator of a surgical voice assistant. Answer with one JSON object.";

/// Everything a clip reads but never changes.
#[derive(Debug, Clone, PartialEq)]
pub struct Resources {
    pub agents: AgentResources,
    pub rules: CorrectionRules,
    pub vocabulary: CommandVocabulary,
    /// Hard cap on orchestrator steps per clip.
    pub max_steps: usize,
}

impl Resources {
    pub fn new(agents: AgentResources, rules: CorrectionRules) -> Self {
        let vocabulary = CommandVocabulary::standard(&agents.ir_manifest);
        Self { agents, rules, vocabulary, max_steps: 64 }
    }
}

impl Default for Resources {
    fn default() -> Self {
        Self::new(AgentResources::default(), CorrectionRules::default())
    }
}

/// What the stages produced during one clip.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ClipRecord {
    /// Transcripts in the order they were taken; one per attempt.
    pub transcripts: Vec<Transcript>,
    /// Last captured, not yet transcribed audio.
    #[serde(skip)]
    pub pending: Option<Transcript>,
    pub validations: Vec<ValidationResult>,
    pub choice: Option<AgentChoice>,
    pub outcome: Option<AgentOutcome>,
}

impl ClipRecord {
    /// Final transcript text of the clip.
    pub fn final_transcript(&self) -> Option<&str> {
        self.transcripts.last().and_then(|t| t.text.as_deref())
    }

    pub fn final_validation(&self) -> Option<&ValidationResult> {
        self.validations.last()
    }
}

/// Mutable view a stage runs against.
pub struct StageCtx<'a> {
    pub state: &'a mut SessionState,
    pub backend: &'a mut dyn ChatBackend,
    pub source: &'a mut dyn TranscriptSource,
    pub resources: &'a Resources,
    pub record: &'a mut ClipRecord,
}

impl fmt::Debug for StageCtx<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StageCtx").field("clip", &self.state.clip.index).field("status", &self.state.status).finish()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StageError {
    /// The command cannot go further; the clip counts an invalid cycle.
    #[error("stage failed: {0}")]
    Failed(String),
    /// No more transcripts; the clip ends with failure.
    #[error(transparent)]
    Intake(#[from] IntakeError),
    /// The backend is unusable; the whole run aborts.
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// One executable function. Returns the status after it ran.
pub trait Stage {
    fn run(&mut self, ctx: &mut StageCtx<'_>) -> Result<Status, StageError>;
}

/// Captures the next clip's audio.
#[derive(Debug, Clone, Copy, Default)]
pub struct AudioStage;

impl Stage for AudioStage {
    fn run(&mut self, ctx: &mut StageCtx<'_>) -> Result<Status, StageError> {
        let t = crate::stages::intake_transcript(ctx.source)?;
        let status = if t.text.is_some() { Status::AudioRecorded } else { Status::NoAudioRecorded };
        ctx.record.pending = Some(t);
        Ok(status)
    }
}

/// Turns captured audio into the raw command.
#[derive(Debug, Clone, Copy, Default)]
pub struct SttStage;

impl Stage for SttStage {
    fn run(&mut self, ctx: &mut StageCtx<'_>) -> Result<Status, StageError> {
        let t = ctx.record.pending.take().ok_or_else(|| StageError::Failed("no captured audio to transcribe".into()))?;
        ctx.state.local.raw_command = t.text.clone();
        ctx.state.local.revised_command = None;
        ctx.state.local.valid = None;
        ctx.record.transcripts.push(t);
        Ok(Status::CommandTranscribed)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CorrectValidateStage;

impl Stage for CorrectValidateStage {
    fn run(&mut self, ctx: &mut StageCtx<'_>) -> Result<Status, StageError> {
        let transcript =
            ctx.record.transcripts.last().cloned().ok_or_else(|| StageError::Failed("nothing transcribed".into()))?;
        let sctx = StageContext {
            memory: &ctx.state.global,
            rules: &ctx.resources.rules,
            vocabulary: &ctx.resources.vocabulary,
        };
        let v = correct_and_validate(&transcript, &sctx, ctx.backend)?;
        ctx.state.local.revised_command = Some(v.revised.clone());
        ctx.state.local.valid = Some(v.valid);
        let status = if v.valid { Status::CommandValid } else { Status::LastCommandInvalid };
        ctx.record.validations.push(v);
        Ok(status)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReasoningStage;

impl Stage for ReasoningStage {
    fn run(&mut self, ctx: &mut StageCtx<'_>) -> Result<Status, StageError> {
        let v = match ctx.record.validations.last() {
            Some(v) if v.valid => v.clone(),
            _ => return Err(StageError::Failed("no valid command to reason about".into())),
        };
        let sctx = StageContext {
            memory: &ctx.state.global,
            rules: &ctx.resources.rules,
            vocabulary: &ctx.resources.vocabulary,
        };
        match reason_agent(&v, &sctx, ctx.backend) {
            Ok(choice) => {
                ctx.state.local.agent = Some(choice.agent);
                ctx.record.choice = Some(choice);
                Ok(Status::AgentSelected)
            }
            Err(ReasonError::Llm(e)) => Err(e.into()),
            Err(e) => Err(StageError::Failed(e.to_string())),
        }
    }
}

/// Runs one task agent on the revised command.
#[derive(Debug, Clone, Copy)]
pub struct AgentStage(pub AgentId);

impl Stage for AgentStage {
    fn run(&mut self, ctx: &mut StageCtx<'_>) -> Result<Status, StageError> {
        let agent = self.0;
        let command = match (&ctx.state.local.revised_command, ctx.state.local.valid) {
            (Some(c), Some(true)) => c.clone(),
            _ => return Err(StageError::Failed("no valid command for the agent".into())),
        };
        let current = ctx.state.agent_states.get(&agent);
        match agents::execute(agent, &command, current, &ctx.resources.agents, ctx.backend) {
            Ok((next, outcome)) => {
                ctx.state.agent_states.insert(agent, next.clone());
                ctx.state.local.agent_state_snapshot = Some(next);
                ctx.state.global.append(command, agent);
                ctx.record.outcome = Some(outcome);
                Ok(Status::AgentCompleted)
            }
            Err(AgentError::Llm(e)) => Err(e.into()),
            Err(e) => Err(StageError::Failed(e.to_string())),
        }
    }
}

/// Terminal marker; never changes the status.
#[derive(Debug, Clone, Copy, Default)]
pub struct EndStage;

impl Stage for EndStage {
    fn run(&mut self, ctx: &mut StageCtx<'_>) -> Result<Status, StageError> {
        Ok(ctx.state.status)
    }
}

/// Binds every function to the stage that executes it.
pub struct StageRegistry {
    stages: BTreeMap<FunctionId, Box<dyn Stage + Send>>,
}

impl fmt::Debug for StageRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StageRegistry").field("functions", &self.stages.keys().collect::<Vec<_>>()).finish()
    }
}

impl Default for StageRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

impl StageRegistry {
    pub fn empty() -> Self {
        Self { stages: BTreeMap::new() }
    }

    /// The built-in stage for every function.
    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register(FunctionId::RealTimeAudio, AudioStage);
        r.register(FunctionId::Stt, SttStage);
        r.register(FunctionId::CorrectValidate, CorrectValidateStage);
        r.register(FunctionId::CommandReasoning, ReasoningStage);
        for a in AgentId::ALL {
            r.register(a.function(), AgentStage(a));
        }
        r.register(FunctionId::End, EndStage);
        r
    }

    /// Replaces the stage bound to `f`.
    pub fn register(&mut self, f: FunctionId, stage: impl Stage + Send + 'static) -> &mut Self {
        self.stages.insert(f, Box::new(stage));
        self
    }

    /// Functions with no stage bound.
    pub fn missing(&self) -> Vec<FunctionId> {
        FunctionId::ALL.into_iter().filter(|f| !self.stages.contains_key(f)).collect()
    }

    fn run(&mut self, f: FunctionId, ctx: &mut StageCtx<'_>) -> Result<Status, StageError> {
        match self.stages.get_mut(&f) {
            Some(stage) => stage.run(ctx),
            None => Err(StageError::Failed(format!("no stage registered for {}", f.as_str()))),
        }
    }
}

/// One orchestrator step as recorded in the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub clip: u32,
    pub step: u32,
    pub status: Status,
    pub proposal: FunctionProposal,
    /// Function the proposal (or fallback) picked.
    pub proposed: FunctionId,
    /// Function that ran after the decision rules.
    pub chosen: FunctionId,
    pub overridden: bool,
    /// The step ended the clip with failure, or its stage failed.
    pub failed: bool,
    pub invalid_cycles: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Ordered record of one clip's steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkflowTrace {
    pub clip: u32,
    pub steps: Vec<TraceStep>,
    /// Step indices at which an invalid cycle was counted.
    pub ic_events: Vec<u32>,
    /// The clip ended without a completed command.
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl WorkflowTrace {
    /// Functions in execution order.
    pub fn flow(&self) -> Vec<FunctionId> {
        self.steps.iter().map(|s| s.chosen).collect()
    }

    pub fn invalid_cycles(&self) -> u32 {
        self.ic_events.len() as u32
    }

    /// Flow is well formed and the clip completed.
    pub fn flow_ok(&self) -> bool {
        !self.failed && follows_grammar(&self.flow())
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        self.steps.iter().map(|s| serde_json::to_string(s).unwrap_or_default() + "\n").collect()
    }

    fn fail(&mut self, why: impl Into<String>) {
        self.failed = true;
        if self.failure.is_none() {
            self.failure = Some(why.into());
        }
    }
}

/// Outcome of [`run_clip`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClipRun {
    pub trace: WorkflowTrace,
    pub record: ClipRecord,
}

/// A backend failure that aborts the run.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("clip {clip} step {step}: {source}")]
pub struct EngineError {
    pub clip: u32,
    pub step: u32,
    #[source]
    pub source: LlmError,
}

/// Runs one clip from its current status until `end`.
///
/// The state is left at the end of the clip; call
/// [`SessionState::advance_clip`] before the next one.
pub fn run_clip(
    state: &mut SessionState,
    backend: &mut dyn ChatBackend,
    source: &mut dyn TranscriptSource,
    registry: &mut StageRegistry,
    resources: &Resources,
) -> Result<ClipRun, EngineError> {
    let clip = state.clip.index;
    let mut trace = WorkflowTrace { clip, ..WorkflowTrace::default() };
    let mut record = ClipRecord::default();
    let mut forced_end: Option<String> = None;

    for step in 0u32.. {
        let abort = |source| EngineError { clip, step, source };
        let status = state.status;
        let (proposal, proposed, rule, note) = if let Some(why) = forced_end.take() {
            // The source ran dry: close the clip without asking the model.
            let proposal = complete_missing_functions(&BTreeMap::new(), ProposalSource::Unparseable);
            let rule = RuleOutcome { function: FunctionId::End, overridden: true, failure: true, counted_invalid: false };
            (proposal, FunctionId::End, rule, Some(why))
        } else {
            let req = ChatRequest::new(ORCHESTRATOR_SYSTEM, build_orchestrator_prompt(state))
                .with_label(orchestrator_label(state));
            let reply = backend.chat(&req).map_err(abort)?;
            let proposal = match parse_probability_json(&reply.text, &FunctionId::ALL) {
                Ok(p) => complete_missing_functions(&p.probs, ProposalSource::Model),
                Err(e) => {
                    log::warn!("orchestrator reply unparseable: {e}");
                    complete_missing_functions(&BTreeMap::new(), ProposalSource::Unparseable)
                }
            };
            let proposed = select_next_function(&proposal, status, state.selected_agent());
            let mut rule = apply_decision_rules(state, proposed);
            let mut note = None;
            if rule.failure {
                note = Some(format!("more than {} invalid attempts", state.ic_max));
            } else if step as usize >= resources.max_steps && rule.function != FunctionId::End {
                rule = RuleOutcome { function: FunctionId::End, overridden: true, failure: true, counted_invalid: false };
                note = Some("step limit reached".into());
            }
            (proposal, proposed, rule, note)
        };
        if rule.counted_invalid {
            trace.ic_events.push(step);
        }
        if rule.failure {
            trace.fail(note.clone().unwrap_or_default());
        }
        state.current_function = rule.function;
        let mut entry = TraceStep {
            clip,
            step,
            status,
            proposal,
            proposed,
            chosen: rule.function,
            overridden: rule.overridden,
            failed: rule.failure,
            invalid_cycles: state.invalid_cycles,
            note,
        };
        if rule.function == FunctionId::End {
            trace.steps.push(entry);
            break;
        }

        let mut ctx = StageCtx { state, backend, source, resources, record: &mut record };
        match registry.run(rule.function, &mut ctx) {
            Ok(next) => state.status = next,
            Err(StageError::Failed(why)) => {
                log::info!("clip {clip}: {} failed: {why}", rule.function.as_str());
                entry.failed = true;
                entry.note = Some(why);
                state.status = Status::LastCommandInvalid;
            }
            Err(StageError::Intake(e)) => {
                entry.failed = true;
                entry.note = Some(e.to_string());
                forced_end = Some(e.to_string());
            }
            Err(StageError::Llm(e)) => return Err(abort(e)),
        }
        trace.steps.push(entry);
    }
    Ok(ClipRun { trace, record })
}

//! Next-function planning.
//!
//! Each step the model sees the function catalogue and the current status
//! and answers with a probability per function. The engine completes the
//! missing entries, takes the argmax (falling back to a fixed table when the
//! answer carries no signal) and lets three deterministic rules override it.

pub mod engine;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::llm::{Matcher, MockScript};
use crate::model::{AgentId, FunctionId, SessionState, Status};

pub use engine::{
    run_clip, AgentStage, AudioStage, ClipRecord, ClipRun, CorrectValidateStage, EndStage, EngineError, ReasoningStage,
    Resources, Stage, StageCtx, StageError, StageRegistry, SttStage, TraceStep, WorkflowTrace,
};

/// One-line meaning of each function, as shown to the model.
pub fn function_definition(f: FunctionId) -> &'static str {
    match f {
        FunctionId::RealTimeAudio => "capture the next ten-second audio clip from the operating room",
        FunctionId::Stt => "transcribe the captured audio into text",
        FunctionId::CorrectValidate => "correct recognition errors in the transcript and decide if the command is valid",
        FunctionId::CommandReasoning => "choose the task agent that should carry out the valid command",
        FunctionId::IrAgent => "information retrieval agent: show or hide patient clinical information",
        FunctionId::IvAgent => "image viewer agent: show, move, zoom or remove CT slice views",
        FunctionId::ArAgent => "anatomy rendering agent: show and manipulate the 3D anatomical reconstruction",
        FunctionId::End => "finish the workflow for this clip",
    }
}

const ORCHESTRATOR_INSTRUCTIONS: &str = "You plan a voice-controlled surgical assistant. \
Given the current status, give the probability that each function should run next. \
Probabilities are between 0 and 1; the most likely function runs.";

/// Builds the planning prompt: instructions, function catalogue, decision
/// rules, status, output format.
pub fn build_orchestrator_prompt(state: &SessionState) -> String {
    let functions = FunctionId::ALL
        .iter()
        .map(|f| format!("- {}: {}", f.as_str(), function_definition(*f)))
        .collect::<Vec<_>>()
        .join("\n");
    let mut status = format!("Status: {}", state.status);
    if let (Status::AgentSelected, Some(agent)) = (state.status, state.selected_agent()) {
        status.push_str(&format!("\nSelected agent: {}", agent.as_str()));
    }
    let keys = FunctionId::ALL.iter().map(|f| format!("\"{}\": <p>", f.as_str())).collect::<Vec<_>>().join(", ");
    format!(
        "{ORCHESTRATOR_INSTRUCTIONS}\n\nFunctions:\n{functions}\n\nRules:\n\
         - an invalid command goes back to {audio} for a new command\n\
         - after {max} invalid attempts in a row the workflow ends\n\
         - once an agent has completed, the workflow ends\n\n\
         {status}\n\nOutput format: {{{keys}}}\n",
        audio = FunctionId::RealTimeAudio.as_str(),
        max = state.ic_max,
    )
}

/// Routing label for scripted backends: `orchestrator:<status>`, plus
/// `:<agent>` once an agent is selected.
pub fn orchestrator_label(state: &SessionState) -> String {
    match (state.status, state.selected_agent()) {
        (Status::AgentSelected, Some(agent)) => format!("orchestrator:{}:{}", state.status, agent.as_str()),
        _ => format!("orchestrator:{}", state.status),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalSource {
    /// Parsed from the model reply.
    Model,
    /// The reply had no usable object; every function is zero.
    Unparseable,
}

/// A probability for every function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionProposal {
    pub probs: BTreeMap<FunctionId, f64>,
    pub source: ProposalSource,
}

impl FunctionProposal {
    pub fn get(&self, f: FunctionId) -> f64 {
        self.probs.get(&f).copied().unwrap_or(0.0)
    }

    /// True when no function has positive probability.
    pub fn is_silent(&self) -> bool {
        self.probs.values().all(|p| *p <= 0.0)
    }
}

/// Fills absent functions with 0 so the proposal covers the whole catalogue.
pub fn complete_missing_functions(partial: &BTreeMap<FunctionId, f64>, source: ProposalSource) -> FunctionProposal {
    let probs = FunctionId::ALL.iter().map(|f| (*f, partial.get(f).copied().unwrap_or(0.0))).collect();
    FunctionProposal { probs, source }
}

/// Function implied by the status alone, used when the proposal is all zero.
pub fn fallback_function(status: Status, selected: Option<AgentId>) -> FunctionId {
    match status {
        Status::Idle | Status::LastCommandInvalid => FunctionId::RealTimeAudio,
        Status::AudioRecorded | Status::NoAudioRecorded => FunctionId::Stt,
        Status::CommandTranscribed => FunctionId::CorrectValidate,
        Status::CommandValid => FunctionId::CommandReasoning,
        Status::AgentSelected => selected.map_or(FunctionId::CommandReasoning, AgentId::function),
        Status::AgentCompleted => FunctionId::End,
    }
}

/// Argmax of the proposal; ties go to the earlier function in catalogue order.
pub fn select_next_function(proposal: &FunctionProposal, status: Status, selected: Option<AgentId>) -> FunctionId {
    if proposal.is_silent() {
        return fallback_function(status, selected);
    }
    let mut best = FunctionId::ALL[0];
    for f in FunctionId::ALL {
        if proposal.get(f) > proposal.get(best) {
            best = f;
        }
    }
    best
}

/// What the decision rules made of the proposed function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleOutcome {
    pub function: FunctionId,
    pub overridden: bool,
    /// The clip ends without a completed command.
    pub failure: bool,
    /// This step counted an invalid cycle.
    pub counted_invalid: bool,
}

/// Applies the fixed rules, in order:
/// (a) after an invalid command, count the cycle and go back to audio;
/// (b) past the cycle limit, end with failure;
/// (c) after an agent completes, end.
/// Anything else passes through.
pub fn apply_decision_rules(state: &mut SessionState, proposed: FunctionId) -> RuleOutcome {
    let outcome = |function: FunctionId, failure: bool, counted_invalid: bool| RuleOutcome {
        function,
        overridden: function != proposed,
        failure,
        counted_invalid,
    };
    match state.status {
        Status::LastCommandInvalid => {
            state.invalid_cycles += 1;
            if state.invalid_cycles > state.ic_max {
                outcome(FunctionId::End, true, true)
            } else {
                outcome(FunctionId::RealTimeAudio, false, true)
            }
        }
        Status::AgentCompleted => outcome(FunctionId::End, false, false),
        _ => outcome(proposed, false, false),
    }
}

/// The reply a well-behaved planner gives for `status`: the fallback
/// function with probability 0.95.
pub fn ideal_reply(status: Status, selected: Option<AgentId>) -> String {
    format!("{{\"{}\": 0.95}}", fallback_function(status, selected).as_str())
}

/// Adds a reusable reply for every orchestrator label.
pub fn script_ideal_orchestrator(script: &mut MockScript) {
    for status in Status::ALL {
        if status == Status::AgentSelected {
            for agent in AgentId::ALL {
                let label = format!("orchestrator:{status}:{}", agent.as_str());
                script.push(Matcher::Label(label), ideal_reply(status, Some(agent)));
            }
        } else {
            script.push(Matcher::Label(format!("orchestrator:{status}")), ideal_reply(status, None));
        }
    }
}

/// Whether a function sequence follows
/// `audio stt cv (audio stt cv)* reasoning <agent> end`.
pub fn follows_grammar(flow: &[FunctionId]) -> bool {
    use FunctionId::*;
    let n = flow.len();
    if n < 6 || !(n - 3).is_multiple_of(3) {
        return false;
    }
    let (attempts, tail) = flow.split_at(n - 3);
    let attempts_ok = attempts.chunks(3).all(|c| c == [RealTimeAudio, Stt, CorrectValidate]);
    attempts_ok && tail[0] == CommandReasoning && tail[1].agent().is_some() && tail[2] == End
}

/// Exactly the same grammar, also requiring the executed agent to be `agent`.
pub fn follows_grammar_with(flow: &[FunctionId], agent: AgentId) -> bool {
    follows_grammar(flow) && flow[flow.len() - 2] == agent.function()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use FunctionId::*;

    #[test]
    fn prompt_sections_in_order() {
        let mut s = SessionState { status: Status::AgentSelected, ..SessionState::default() };
        s.local.agent = Some(AgentId::Iv);
        let p = build_orchestrator_prompt(&s);
        let at = |needle: &str| p.find(needle).unwrap_or_else(|| panic!("{needle} missing"));
        assert!(at("You plan") < at("Functions:"));
        assert!(at("Functions:") < at("Rules:"));
        assert!(at("Rules:") < at("Status: Agent selected"));
        assert!(at("Status:") < at("Output format"));
        assert!(p.contains("Selected agent: iv_agent"));
        for f in FunctionId::ALL {
            assert!(p.contains(f.as_str()));
        }
        assert_eq!(orchestrator_label(&s), "orchestrator:Agent selected:iv_agent");
    }

    #[test]
    fn missing_functions_become_zero() {
        let partial = BTreeMap::from([(Stt, 0.9)]);
        let p = complete_missing_functions(&partial, ProposalSource::Model);
        assert_eq!(p.probs.len(), 8);
        assert_eq!(p.get(Stt), 0.9);
        assert_eq!(p.get(End), 0.0);
    }

    #[test]
    fn argmax_and_fallback() {
        let p = complete_missing_functions(&BTreeMap::from([(Stt, 0.2), (CorrectValidate, 0.7)]), ProposalSource::Model);
        assert_eq!(select_next_function(&p, Status::AudioRecorded, None), CorrectValidate);
        let tie = complete_missing_functions(&BTreeMap::from([(End, 0.5), (Stt, 0.5)]), ProposalSource::Model);
        assert_eq!(select_next_function(&tie, Status::Idle, None), Stt);
        let zero = complete_missing_functions(&BTreeMap::new(), ProposalSource::Unparseable);
        assert_eq!(select_next_function(&zero, Status::Idle, None), RealTimeAudio);
        assert_eq!(select_next_function(&zero, Status::NoAudioRecorded, None), Stt);
        assert_eq!(select_next_function(&zero, Status::AgentSelected, Some(AgentId::Ar)), ArAgent);
        assert_eq!(select_next_function(&zero, Status::AgentCompleted, None), End);
    }

    #[test]
    fn invalid_command_loops_back_then_fails() {
        let mut s = SessionState { status: Status::LastCommandInvalid, ..SessionState::default() };
        for i in 1..=3 {
            let r = apply_decision_rules(&mut s, CommandReasoning);
            assert_eq!(r.function, RealTimeAudio);
            assert!(r.overridden && r.counted_invalid && !r.failure);
            assert_eq!(s.invalid_cycles, i);
        }
        let r = apply_decision_rules(&mut s, RealTimeAudio);
        assert_eq!(r.function, End);
        assert!(r.failure && r.overridden);
        assert_eq!(s.invalid_cycles, 4);
    }

    #[test]
    fn completed_agent_ends() {
        let mut s = SessionState { status: Status::AgentCompleted, ..SessionState::default() };
        let r = apply_decision_rules(&mut s, IvAgent);
        assert_eq!(r, RuleOutcome { function: End, overridden: true, failure: false, counted_invalid: false });
        let r = apply_decision_rules(&mut s, End);
        assert!(!r.overridden);
    }

    #[test]
    fn grammar() {
        let ok = [RealTimeAudio, Stt, CorrectValidate, CommandReasoning, IvAgent, End];
        assert!(follows_grammar(&ok));
        assert!(follows_grammar_with(&ok, AgentId::Iv));
        assert!(!follows_grammar_with(&ok, AgentId::Ar));
        let retry = [RealTimeAudio, Stt, CorrectValidate, RealTimeAudio, Stt, CorrectValidate, CommandReasoning, ArAgent, End];
        assert!(follows_grammar(&retry));
        assert!(!follows_grammar(&[RealTimeAudio, Stt, CorrectValidate, End]));
        assert!(!follows_grammar(&[RealTimeAudio, CorrectValidate, Stt, CommandReasoning, IvAgent, End]));
        assert!(!follows_grammar(&[RealTimeAudio, Stt, CorrectValidate, CommandReasoning, End, End]));
        assert!(!follows_grammar(&[]));
    }

    fn any_status() -> impl Strategy<Value = Status> {
        proptest::sample::select(Status::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn selection_is_in_catalogue_and_deterministic(
            probs in proptest::collection::vec(0.0f64..=1.0, 8),
            status in any_status(),
        ) {
            let partial: BTreeMap<_, _> = FunctionId::ALL.iter().copied().zip(probs).collect();
            let p = complete_missing_functions(&partial, ProposalSource::Model);
            let a = select_next_function(&p, status, Some(AgentId::Ir));
            prop_assert_eq!(a, select_next_function(&p, status, Some(AgentId::Ir)));
            if !p.is_silent() {
                let max = p.probs.values().cloned().fold(0.0, f64::max);
                prop_assert_eq!(p.get(a), max);
            }
        }

        #[test]
        fn rules_never_pass_through_after_completion(f in proptest::sample::select(FunctionId::ALL.to_vec())) {
            let mut s = SessionState { status: Status::AgentCompleted, ..SessionState::default() };
            prop_assert_eq!(apply_decision_rules(&mut s, f).function, End);
        }
    }
}

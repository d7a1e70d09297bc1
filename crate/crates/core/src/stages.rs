//! Workflow stages ahead of the task agents: transcript intake,
//! correct-and-validate, and command reasoning.
//!
//! Audio capture and speech recognition are out of scope; a
//! [`TranscriptSource`] supplies the recognised text (or its absence) for
//! each clip.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::agents::ar::{Structure, Viewpoint};
use crate::agents::ir::ColumnManifest;
use crate::agents::iv::Plane;
use crate::llm::{parse_labeled_json, ChatBackend, ChatRequest, FieldKind, FieldSpec, LlmError, ParseError};
use crate::model::{AgentId, GlobalMemory, MEMORY_WINDOW};
use crate::text::{contains_phrase, normalize, words};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranscriptOrigin {
    Fixture,
    Stdin,
    Http,
    ExternalStt,
}

/// Recognised speech for one clip. `text: None` means nothing was said,
/// which is different from an empty string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<String>,
    pub source: TranscriptOrigin,
}

impl Transcript {
    pub fn spoken(text: impl Into<String>, source: TranscriptOrigin) -> Self {
        Self { text: Some(text.into()), speaker: None, source }
    }

    pub fn silent(source: TranscriptOrigin) -> Self {
        Self { text: None, speaker: None, source }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IntakeError {
    #[error("transcript source exhausted")]
    SourceExhausted,
    #[error("transcript source failed: {0}")]
    Failed(String),
}

/// Supplies one transcript per call.
pub trait TranscriptSource {
    fn next_transcript(&mut self) -> Result<Transcript, IntakeError>;
}

impl<S: TranscriptSource + ?Sized> TranscriptSource for &mut S {
    fn next_transcript(&mut self) -> Result<Transcript, IntakeError> {
        (**self).next_transcript()
    }
}

impl<S: TranscriptSource + ?Sized> TranscriptSource for alloc::boxed::Box<S> {
    fn next_transcript(&mut self) -> Result<Transcript, IntakeError> {
        (**self).next_transcript()
    }
}

/// Replays a fixed list of transcripts, e.g. dataset raw commands with
/// their injected recognition errors.
#[derive(Debug, Clone, Default)]
pub struct FixtureSource {
    queue: VecDeque<Transcript>,
}

impl FixtureSource {
    pub fn new(items: impl IntoIterator<Item = Transcript>) -> Self {
        Self { queue: items.into_iter().collect() }
    }

    /// One transcript per entry; `None` is a silent clip.
    pub fn from_texts<S: Into<String>>(texts: impl IntoIterator<Item = Option<S>>) -> Self {
        Self::new(texts.into_iter().map(|t| Transcript { text: t.map(Into::into), speaker: None, source: TranscriptOrigin::Fixture }))
    }

    pub fn remaining(&self) -> usize {
        self.queue.len()
    }
}

impl TranscriptSource for FixtureSource {
    fn next_transcript(&mut self) -> Result<Transcript, IntakeError> {
        self.queue.pop_front().ok_or(IntakeError::SourceExhausted)
    }
}

pub fn intake_transcript(source: &mut dyn TranscriptSource) -> Result<Transcript, IntakeError> {
    source.next_transcript()
}

/// Known speech-recognition confusions, literal → replacement.
///
/// Shown to the correction prompt as guidance; never applied blindly,
/// since "at" or "2" are usually meant literally.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CorrectionRules(pub BTreeMap<String, String>);

impl Default for CorrectionRules {
    fn default() -> Self {
        let pairs = [
            ("city", "CT"),
            ("corona", "coronal"),
            ("COVID", "coronal"),
            ("long", "lung"),
            ("2", "to"),
            ("write", "right"),
            ("June", "zoom"),
            ("at", "add"),
        ];
        Self(pairs.into_iter().map(|(a, b)| (String::from(a), String::from(b))).collect())
    }
}

impl CorrectionRules {
    pub fn render(&self) -> String {
        self.0.iter().map(|(a, b)| format!("- \"{a}\" may be a misrecognition of \"{b}\"")).collect::<Vec<_>>().join("\n")
    }

    /// Adds or replaces entries.
    pub fn extend(&mut self, other: CorrectionRules) {
        self.0.extend(other.0);
    }
}

/// Words and phrases that any supported command mentions at least once:
/// data fields, planes, structures, views and action verbs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandVocabulary {
    terms: Vec<Vec<String>>,
}

const ACTION_TERMS: &[&str] = &[
    "show", "display", "hide", "remove", "erase", "clear", "delete", "turn on", "turn off", "zoom", "closer",
    "enlarge", "magnify", "minimize", "reduce", "shrink", "rotate", "turn", "spin", "move", "step", "scroll", "go",
    "add", "reset", "initialize", "view", "look", "load", "open", "bring", "get", "plus", "minus", "slice", "ct",
    "scan", "image", "images", "recon", "reconstruction", "model", "3d", "anatomy", "anatomical", "info",
    "information", "results", "data", "patient", "age", "old", "sex", "gender", "height", "tall", "weight",
    "diagnosis", "diagnosed", "history", "lung", "lungs", "lobe", "lobes", "airway", "nodule", "nodules",
    "tumor", "pft", "fev1", "fvc", "function", "forward", "front", "back", "backward", "posterior", "anterior",
    "up", "down", "left", "right", "superior", "inferior", "middle", "rotation", "rotating", "horizontal",
    "horizontally", "vertical", "vertically", "condition", "conditions", "comorbidity", "comorbidities", "stop",
];

impl CommandVocabulary {
    pub fn standard(manifest: &ColumnManifest) -> Self {
        let mut phrases: Vec<String> = ACTION_TERMS.iter().map(|s| normalize(s)).collect();
        phrases.extend(manifest.vocabulary());
        phrases.extend(Plane::ALL.iter().map(|p| String::from(p.as_str())));
        for s in Structure::ALL {
            phrases.push(normalize(s.as_str()));
            phrases.push(normalize(s.full_name()));
        }
        phrases.extend(Viewpoint::ALL.iter().map(|v| normalize(&format!("{v:?}"))));
        phrases.sort();
        phrases.dedup();
        Self { terms: phrases.iter().map(|p| words(p)).filter(|w| !w.is_empty()).collect() }
    }

    pub fn mentions_known_term(&self, text: &str) -> bool {
        let w = words(text);
        self.terms.iter().any(|t| contains_phrase(&w, t))
    }
}

/// Output of correct-and-validate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub revised: String,
    pub valid: bool,
    /// Which rule decided, when it was not the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ValidationResult {
    fn invalid(revised: impl Into<String>, note: &str) -> Self {
        Self { revised: revised.into(), valid: false, note: Some(note.into()) }
    }
}

/// "Select {agent name}" revision used for silent clips.
pub fn select_command(agent: AgentId) -> String {
    format!("Select {}", agent.display_name())
}

/// Inverse of [`select_command`].
pub fn parse_select_command(revised: &str) -> Option<AgentId> {
    let n = normalize(revised);
    AgentId::ALL.into_iter().find(|a| n == normalize(&select_command(*a)))
}

/// Shared inputs of the correction and reasoning prompts.
#[derive(Debug, Clone, Copy)]
pub struct StageContext<'a> {
    pub memory: &'a GlobalMemory,
    pub rules: &'a CorrectionRules,
    pub vocabulary: &'a CommandVocabulary,
}

fn agent_catalogue() -> String {
    AgentId::ALL.iter().map(|a| format!("- {} ({}): {}", a.as_str(), a.display_name(), a.description())).collect::<Vec<_>>().join("\n")
}

const CC_SYSTEM: &str = "You correct and validate voice commands given to a surgical assistant. \
The text comes from speech recognition and may contain misrecognised words. \
Fix recognition errors using the correction rules and the recent commands, keeping the surgeon's wording otherwise. \
A command is valid only if one of the agents below can carry it out; requests about anything else \
(instruments, staff, the operating room, data the agents do not hold) are invalid.";

/// The correction prompt: agents, correction rules, validation rules,
/// output format, then the memory window and the command.
pub fn build_cc_prompt(text: &str, ctx: &StageContext<'_>) -> String {
    format!(
        "Agents:\n{}\n\nCorrection rules:\n{}\n\nValidation rules:\n\
         - valid if the command asks an agent above to show, hide, move, zoom, rotate, add, remove, reset or select something it manages\n\
         - invalid otherwise\n\n\
         Output format: {{\"revised\": \"<corrected command>\", \"valid\": true|false}}\n\n\
         Recent commands:\n{}\n\nCommand: {}\n",
        agent_catalogue(),
        ctx.rules.render(),
        ctx.memory.render_window(MEMORY_WINDOW),
        text
    )
}

pub fn cc_label(raw: &str) -> String {
    format!("correct_validate:{raw}")
}

/// Corrects a transcript and judges its validity.
///
/// Silent clips are revised to "Select {agent}" for the most recent agent
/// without consulting the model. Unparseable model output makes the
/// command invalid with the raw text kept. Transport errors propagate.
pub fn correct_and_validate(
    transcript: &Transcript,
    ctx: &StageContext<'_>,
    backend: &mut dyn ChatBackend,
) -> Result<ValidationResult, LlmError> {
    let raw = match &transcript.text {
        None => {
            return Ok(match ctx.memory.last_agent() {
                Some(agent) => ValidationResult { revised: select_command(agent), valid: true, note: Some("silent clip".into()) },
                None => ValidationResult::invalid("", "silent clip with no previous agent"),
            })
        }
        Some(t) if t.trim().is_empty() => return Ok(ValidationResult::invalid("", "empty transcript")),
        Some(t) => t.as_str(),
    };
    let req = ChatRequest::new(CC_SYSTEM, build_cc_prompt(raw, ctx)).with_label(cc_label(raw));
    let reply = backend.chat(&req)?;
    let schema = [FieldSpec::required("revised", FieldKind::Text), FieldSpec::required("valid", FieldKind::Bool)];
    let fields = match parse_labeled_json(&reply.text, &schema) {
        Ok(f) => f,
        Err(e) => {
            log::warn!("correct_validate output unparseable ({e}); treating {raw:?} as invalid");
            return Ok(ValidationResult::invalid(raw, "unparseable model output"));
        }
    };
    let revised = fields["revised"].as_str().unwrap_or_default().trim().to_string();
    let valid = fields["valid"].as_bool().unwrap_or(false);
    if !valid {
        return Ok(ValidationResult { revised: if revised.is_empty() { raw.into() } else { revised }, valid: false, note: None });
    }
    if revised.is_empty() {
        return Ok(ValidationResult::invalid(raw, "empty revision"));
    }
    if parse_select_command(&revised).is_none() && !ctx.vocabulary.mentions_known_term(&revised) {
        return Ok(ValidationResult::invalid(revised, "no known field, plane, structure, view or action"));
    }
    Ok(ValidationResult { revised, valid: true, note: None })
}

/// Agent picked by command reasoning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentChoice {
    pub agent: AgentId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReasonError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("reasoning named unknown agent {0:?}")]
    UnknownAgent(String),
    #[error("reasoning called on an invalid command")]
    InvalidCommand,
}

const CR_SYSTEM: &str = "You route a validated surgical voice command to exactly one task agent. \
Think about which agent manages what the command refers to. Ambiguous commands such as \"Zoom in\" or \"Zoom out\" \
go to the agent used by the most recent related command.";

pub fn build_cr_prompt(revised: &str, ctx: &StageContext<'_>) -> String {
    format!(
        "Agents:\n{}\n\nRecent commands:\n{}\n\nOutput format: {{\"agent\": \"ir_agent\"|\"iv_agent\"|\"ar_agent\", \"rationale\": \"<short reason>\"}}\n\nCommand: {}\n",
        agent_catalogue(),
        ctx.memory.render_window(MEMORY_WINDOW),
        revised
    )
}

pub fn cr_label(revised: &str) -> String {
    format!("command_reasoning:{revised}")
}

/// Chooses the task agent for a valid command. "Select {agent}" commands
/// resolve directly.
pub fn reason_agent(
    v: &ValidationResult,
    ctx: &StageContext<'_>,
    backend: &mut dyn ChatBackend,
) -> Result<AgentChoice, ReasonError> {
    if !v.valid {
        return Err(ReasonError::InvalidCommand);
    }
    if let Some(agent) = parse_select_command(&v.revised) {
        return Ok(AgentChoice { agent, rationale: Some("explicit agent selection".into()) });
    }
    let req = ChatRequest::new(CR_SYSTEM, build_cr_prompt(&v.revised, ctx)).with_label(cr_label(&v.revised));
    let reply = backend.chat(&req)?;
    let schema = [FieldSpec::required("agent", FieldKind::Text), FieldSpec::optional("rationale", FieldKind::Text)];
    let fields = parse_labeled_json(&reply.text, &schema)?;
    let name = fields["agent"].as_str().unwrap_or_default();
    let agent = AgentId::parse(name).ok_or_else(|| ReasonError::UnknownAgent(name.into()))?;
    let rationale = fields.get("rationale").and_then(|r| r.as_str()).map(String::from);
    Ok(AgentChoice { agent, rationale })
}

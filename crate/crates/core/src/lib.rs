//! Voice-command orchestration engine for surgical patient-data overlays.
//!
//! An LLM-backed planner walks each 10-second clip through a fixed set of
//! workflow functions (audio intake, transcription, correction/validation,
//! agent reasoning) and hands valid commands to one of three task agents:
//!
//! - [`agents::ir`]: clinical-information text overlay
//! - [`agents::iv`]: CT multi-planar slice viewer
//! - [`agents::ar`]: 3D anatomy model viewer
//!
//! The [`eval`] module scores finished clips stage by stage and aggregates
//! success rates with confidence intervals.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the live HTTP
//! backend and the CLI live in the `visa` companion crate.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod agents;
pub mod eval;
pub mod llm;
pub mod model;
pub mod orchestrator;
pub mod stages;
pub mod text;
pub mod timeline;

pub use model::{AgentId, AgentState, ClipRef, FunctionId, GlobalMemory, LocalMemory, SessionState, Status};

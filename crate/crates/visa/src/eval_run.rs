//! Runs a dataset through the workflow and scores every command.

use anyhow::{Context, Result};
use visa_core::eval::{build_report, score_command, CommandRecord, MetricReport, StageOutcomeRow};
use visa_core::llm::ChatBackend;
use visa_core::orchestrator::engine::{run_clip, Resources, StageRegistry, WorkflowTrace};
use visa_core::stages::{FixtureSource, Transcript, TranscriptOrigin};
use visa_core::SessionState;

/// Per-command rows, traces and the aggregated report of one evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub rows: Vec<StageOutcomeRow>,
    pub traces: Vec<WorkflowTrace>,
    pub report: MetricReport,
}

/// The utterances of one record as a transcript source.
pub fn record_source(record: &CommandRecord) -> FixtureSource {
    FixtureSource::new(record.utterances().into_iter().map(|t| Transcript {
        text: Some(t.to_string()),
        speaker: record.speaker.clone(),
        source: TranscriptOrigin::Fixture,
    }))
}

/// Runs all records, in order, as consecutive clips of one session.
///
/// Each record is one clip; invalid attempts and the final utterance are
/// delivered in sequence within that clip.
pub fn evaluate(
    records: &[CommandRecord],
    backend: &mut dyn ChatBackend,
    resources: &Resources,
    ic_max: u32,
) -> Result<Evaluation> {
    let mut state = SessionState::new(ic_max);
    let mut registry = StageRegistry::standard();
    let mut rows = Vec::with_capacity(records.len());
    let mut traces = Vec::with_capacity(records.len());
    for record in records {
        let mut source = record_source(record);
        let run = run_clip(&mut state, backend, &mut source, &mut registry, resources)
            .with_context(|| format!("record {}", record.id))?;
        if source.remaining() > 0 {
            log::warn!("record {}: {} utterance(s) left unused", record.id, source.remaining());
        }
        rows.push(score_command(&run, record));
        traces.push(run.trace);
        state.advance_clip();
    }
    let report = build_report(&rows, records)?;
    Ok(Evaluation { rows, traces, report })
}

//! Writes evaluation results: flat metric CSV, full JSON report,
//! per-command stage rows and workflow traces.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use visa_core::eval::{MetricReport, StageOutcomeRow, REPORT_COLUMNS};
use visa_core::orchestrator::engine::WorkflowTrace;

use crate::eval_run::Evaluation;
use crate::io::write;

pub fn report_csv(report: &MetricReport) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(REPORT_COLUMNS)?;
    for line in report.lines() {
        w.serialize(line)?;
    }
    Ok(String::from_utf8(w.into_inner().context("flushing CSV")?)?)
}

pub fn rows_csv(rows: &[StageOutcomeRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner().context("flushing CSV")?)?)
}

pub fn parse_rows_csv(text: &str) -> Result<Vec<StageOutcomeRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().collect::<Result<_, _>>().context("invalid stage-row CSV")
}

pub fn traces_jsonl(traces: &[WorkflowTrace]) -> String {
    traces.iter().map(WorkflowTrace::to_jsonl).collect()
}

/// Files written by [`write_evaluation`].
pub const OUTPUT_FILES: [&str; 4] = ["report.csv", "report.json", "rows.csv", "traces.jsonl"];

/// Writes all outputs into `dir` and returns their paths.
pub fn write_evaluation(ev: &Evaluation, dir: &Path) -> Result<Vec<PathBuf>> {
    let contents = [
        report_csv(&ev.report)?,
        serde_json::to_string_pretty(&ev.report)? + "\n",
        rows_csv(&ev.rows)?,
        traces_jsonl(&ev.traces),
    ];
    let mut paths = Vec::new();
    for (name, text) in OUTPUT_FILES.iter().zip(contents) {
        let p = dir.join(name);
        write(&p, &text)?;
        paths.push(p);
    }
    Ok(paths)
}

/// Short human-readable summary for the terminal.
pub fn summary_text(report: &MetricReport) -> String {
    let mut s = format!("N = {}\n", report.n);
    for (stage, r) in &report.stage_accuracy {
        s.push_str(&format!("{:<4} {:>4}/{:<4} {:.3}  [{:.3}, {:.3}]\n", stage.as_str(), r.successes, r.n, r.rate, r.ci_lo, r.ci_hi));
    }
    for (cond, r) in &report.success {
        s.push_str(&format!("SR {:<11} {:>4}/{:<4} {:.3}  [{:.3}, {:.3}]\n", cond.as_str(), r.successes, r.n, r.rate, r.ci_lo, r.ci_hi));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use visa_core::eval::{build_report, parse_dataset};

    fn sample() -> (Vec<StageOutcomeRow>, MetricReport) {
        let ds = parse_dataset(r#"{"id":"a","agent_gold":"ar","raw_text":"Zoom out","gold_revised":"Zoom out","structure":"single","ctype":"implicit","expression":"baseline","gold_action":"ZOOM_OUT"}"#).unwrap();
        let rows = vec![StageOutcomeRow::new("a", true, true, true, true, false, true, 0)];
        let report = build_report(&rows, &ds).unwrap();
        (rows, report)
    }

    #[test]
    fn report_csv_has_the_fixed_header_and_total_first() {
        let (_, report) = sample();
        let csv = report_csv(&report).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), REPORT_COLUMNS.join(","));
        assert!(lines.next().unwrap().starts_with("total,N,1,1,"));
        assert!(csv.contains("stage,ap,1,0,0.0,"));
    }

    #[test]
    fn rows_round_trip_as_bits() {
        let (rows, _) = sample();
        let text = rows_csv(&rows).unwrap();
        assert!(text.starts_with("id,stt,cc,cr,af,ap,ad,of,ic\na,1,1,1,1,0,0,1,0"));
        assert_eq!(parse_rows_csv(&text).unwrap(), rows);
    }
}

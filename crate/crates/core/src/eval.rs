//! Multi-level orchestration evaluation.
//!
//! Every command is scored per stage (STT, CC, CR, AF, AP, AD, OF) with a
//! binary outcome plus its invalid-cycle count. Aggregates: stage accuracy,
//! three success conditions, per-category and cross-category success rates,
//! Wilson intervals, and stage-to-stage path flows.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agents::{action_names, AgentParams};
use crate::model::AgentId;
use crate::orchestrator::ClipRun;
use crate::text::normalize;

/// Serialises `agent_gold` as `ir` / `iv` / `ar`.
mod short_agent {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(a: &AgentId, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(a.short())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<AgentId, D::Error> {
        let name = String::deserialize(d)?;
        match name.as_str() {
            "ir" => Ok(AgentId::Ir),
            "iv" => Ok(AgentId::Iv),
            "ar" => Ok(AgentId::Ar),
            other => Err(serde::de::Error::custom(format!("unknown agent {other:?}, expected ir, iv or ar"))),
        }
    }
}

/// Binary outcome written as 0 / 1.
mod bit {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            n => Err(serde::de::Error::custom(alloc::format!("outcome must be 0 or 1, got {n}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureCat {
    Single,
    Composite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeCat {
    Explicit,
    Implicit,
    Nlq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpressionCat {
    Baseline,
    Abbreviation,
    Paraphrase,
}

impl StructureCat {
    pub fn as_str(self) -> &'static str {
        match self {
            StructureCat::Single => "single",
            StructureCat::Composite => "composite",
        }
    }
}

impl TypeCat {
    pub fn as_str(self) -> &'static str {
        match self {
            TypeCat::Explicit => "explicit",
            TypeCat::Implicit => "implicit",
            TypeCat::Nlq => "nlq",
        }
    }
}

impl ExpressionCat {
    pub fn as_str(self) -> &'static str {
        match self {
            ExpressionCat::Baseline => "baseline",
            ExpressionCat::Abbreviation => "abbreviation",
            ExpressionCat::Paraphrase => "paraphrase",
        }
    }
}

/// One annotated dataset command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandRecord {
    pub id: String,
    #[serde(with = "short_agent")]
    pub agent_gold: AgentId,
    /// What recognition produced, errors included.
    pub raw_text: String,
    /// Earlier utterances of the same clip that are judged invalid and
    /// re-asked, oldest first. Usually empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub invalid_attempts: Vec<String>,
    pub gold_revised: String,
    pub structure: StructureCat,
    pub ctype: TypeCat,
    pub expression: ExpressionCat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<String>,
    pub gold_action: String,
    #[serde(default)]
    pub gold_params: Value,
}

impl CommandRecord {
    /// Transcripts the clip delivers, in order.
    pub fn utterances(&self) -> Vec<&str> {
        self.invalid_attempts.iter().map(String::as_str).chain([self.raw_text.as_str()]).collect()
    }

    pub fn gold_params_typed(&self) -> Result<AgentParams, serde_json::Error> {
        AgentParams::from_gold(self.agent_gold, &self.gold_params)
    }
}

/// A dataset line that does not fit the schema. `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct SchemaError {
    pub line: usize,
    pub message: String,
}

/// Parses and checks a JSON-lines dataset. Blank lines are skipped.
pub fn parse_dataset(text: &str) -> Result<Vec<CommandRecord>, SchemaError> {
    let mut records = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| SchemaError { line: line_no, message };
        let rec: CommandRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if !ids.insert(rec.id.clone()) {
            return Err(err(format!("duplicate id {:?}", rec.id)));
        }
        if !action_names(rec.agent_gold).contains(&rec.gold_action.as_str()) {
            return Err(err(format!("{:?} is not an action of {}", rec.gold_action, rec.agent_gold)));
        }
        rec.gold_params_typed().map_err(|e| err(format!("gold_params: {e}")))?;
        records.push(rec);
    }
    Ok(records)
}

/// Record counts per category value.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub total: usize,
    pub agent: BTreeMap<String, usize>,
    pub structure: BTreeMap<String, usize>,
    pub ctype: BTreeMap<String, usize>,
    pub expression: BTreeMap<String, usize>,
}

pub fn summarize(records: &[CommandRecord]) -> DistributionSummary {
    let mut s = DistributionSummary { total: records.len(), ..DistributionSummary::default() };
    for r in records {
        *s.agent.entry(r.agent_gold.short().into()).or_default() += 1;
        *s.structure.entry(r.structure.as_str().into()).or_default() += 1;
        *s.ctype.entry(r.ctype.as_str().into()).or_default() += 1;
        *s.expression.entry(r.expression.as_str().into()).or_default() += 1;
    }
    s
}

/// Binary per-stage outcomes of one command.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageOutcomeRow {
    pub id: String,
    #[serde(with = "bit")]
    pub stt: bool,
    #[serde(with = "bit")]
    pub cc: bool,
    #[serde(with = "bit")]
    pub cr: bool,
    #[serde(with = "bit")]
    pub af: bool,
    #[serde(with = "bit")]
    pub ap: bool,
    #[serde(with = "bit")]
    pub ad: bool,
    #[serde(with = "bit")]
    pub of: bool,
    pub ic: u32,
}

impl StageOutcomeRow {
    /// Builds a row; AD is derived from AF and AP.
    #[allow(clippy::too_many_arguments)]
    pub fn new(id: impl Into<String>, stt: bool, cc: bool, cr: bool, af: bool, ap: bool, of: bool, ic: u32) -> Self {
        Self { id: id.into(), stt, cc, cr, af, ap, ad: af && ap, of, ic }
    }

    pub fn get(&self, stage: Stage) -> bool {
        match stage {
            Stage::Stt => self.stt,
            Stage::Cc => self.cc,
            Stage::Cr => self.cr,
            Stage::Af => self.af,
            Stage::Ap => self.ap,
            Stage::Ad => self.ad,
            Stage::Of => self.of,
        }
    }
}

/// Scored stages in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stt,
    Cc,
    Cr,
    Af,
    Ap,
    Ad,
    Of,
}

impl Stage {
    pub const ALL: [Stage; 7] = [Stage::Stt, Stage::Cc, Stage::Cr, Stage::Af, Stage::Ap, Stage::Ad, Stage::Of];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Stt => "stt",
            Stage::Cc => "cc",
            Stage::Cr => "cr",
            Stage::Af => "af",
            Stage::Ap => "ap",
            Stage::Ad => "ad",
            Stage::Of => "of",
        }
    }
}

fn same_text(a: &str, b: &str) -> bool {
    normalize(a) == normalize(b)
}

/// Scores one executed clip against its annotation.
///
/// STT and CC compare normalised text (case, punctuation and spacing
/// ignored) with the gold revision; CC also requires the command to have
/// been judged valid. AF/AP compare the executed agent's action and typed
/// parameters with the gold ones. OF checks the executed function order.
pub fn score_command(run: &ClipRun, record: &CommandRecord) -> StageOutcomeRow {
    let stt = run.record.final_transcript().is_some_and(|t| same_text(t, &record.gold_revised));
    let cc = run.record.final_validation().is_some_and(|v| v.valid && same_text(&v.revised, &record.gold_revised));
    let cr = run.record.choice.as_ref().is_some_and(|c| c.agent == record.agent_gold);
    let outcome = run.record.outcome.as_ref().filter(|o| o.agent == record.agent_gold);
    let af = outcome.is_some_and(|o| o.action == record.gold_action);
    let gold = record.gold_params_typed().ok();
    let ap = outcome.is_some_and(|o| gold.as_ref() == Some(&o.params));
    StageOutcomeRow::new(record.id.clone(), stt, cc, cr, af, ap, run.trace.flow_ok(), run.trace.invalid_cycles())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("no rows to aggregate")]
    NoRows,
    #[error("unknown dimension {0:?}")]
    UnknownDimension(String),
    #[error("row {0:?} has no dataset record")]
    UnknownRecord(String),
    #[error("invalid count: {successes} successes out of {n}")]
    InvalidCount { successes: usize, n: usize },
    #[error("confidence level must be in (0, 1)")]
    InvalidLevel,
}

/// Mean of one stage's outcomes.
pub fn stage_accuracy(rows: &[StageOutcomeRow], stage: Stage) -> Result<f64, EvalError> {
    mean(rows, |r| r.get(stage))
}

fn mean(rows: &[StageOutcomeRow], f: impl Fn(&StageOutcomeRow) -> bool) -> Result<f64, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::NoRows);
    }
    Ok(rows.iter().filter(|r| f(r)).count() as f64 / rows.len() as f64)
}

/// Maximum invalid cycles a multi-pass success may use.
pub const MULTI_PASS_MAX_IC: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessCondition {
    /// Every stage correct, no invalid cycle.
    Strict,
    /// Final outcome correct on the first pass.
    SinglePass,
    /// Final outcome correct within three invalid cycles.
    MultiPass,
}

impl SuccessCondition {
    pub const ALL: [SuccessCondition; 3] =
        [SuccessCondition::Strict, SuccessCondition::SinglePass, SuccessCondition::MultiPass];

    pub fn as_str(self) -> &'static str {
        match self {
            SuccessCondition::Strict => "strict",
            SuccessCondition::SinglePass => "single_pass",
            SuccessCondition::MultiPass => "multi_pass",
        }
    }

    pub fn holds(self, r: &StageOutcomeRow) -> bool {
        match self {
            SuccessCondition::Strict => Stage::ALL.iter().all(|s| r.get(*s)) && r.ic == 0,
            SuccessCondition::SinglePass => r.ad && r.of && r.ic == 0,
            SuccessCondition::MultiPass => r.ad && r.of && r.ic <= MULTI_PASS_MAX_IC,
        }
    }
}

pub fn success_rate(rows: &[StageOutcomeRow], cond: SuccessCondition) -> Result<f64, EvalError> {
    mean(rows, |r| cond.holds(r))
}

/// A dataset category dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Agent,
    Structure,
    Type,
    Expression,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [Dimension::Agent, Dimension::Structure, Dimension::Type, Dimension::Expression];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Agent => "agent",
            Dimension::Structure => "structure",
            Dimension::Type => "type",
            Dimension::Expression => "expression",
        }
    }

    pub fn parse(name: &str) -> Result<Self, EvalError> {
        match name.trim().to_ascii_lowercase().as_str() {
            "agent" => Ok(Dimension::Agent),
            "structure" => Ok(Dimension::Structure),
            "type" | "ctype" => Ok(Dimension::Type),
            "expression" => Ok(Dimension::Expression),
            _ => Err(EvalError::UnknownDimension(name.into())),
        }
    }

    pub fn category_of(self, r: &CommandRecord) -> &'static str {
        match self {
            Dimension::Agent => r.agent_gold.short(),
            Dimension::Structure => r.structure.as_str(),
            Dimension::Type => r.ctype.as_str(),
            Dimension::Expression => r.expression.as_str(),
        }
    }
}

/// Successes and count for a group of rows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub successes: usize,
    pub n: usize,
}

impl Tally {
    pub fn rate(self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.successes as f64 / self.n as f64
        }
    }
}

fn join<'a>(
    rows: &'a [StageOutcomeRow],
    dataset: &'a [CommandRecord],
) -> Result<Vec<(&'a StageOutcomeRow, &'a CommandRecord)>, EvalError> {
    let by_id: BTreeMap<&str, &CommandRecord> = dataset.iter().map(|r| (r.id.as_str(), r)).collect();
    rows.iter()
        .map(|row| by_id.get(row.id.as_str()).map(|rec| (row, *rec)).ok_or_else(|| EvalError::UnknownRecord(row.id.clone())))
        .collect()
}

/// Multi-pass tallies per category value. Categories without rows are absent.
pub fn category_tallies(
    rows: &[StageOutcomeRow],
    dataset: &[CommandRecord],
    dim: Dimension,
) -> Result<BTreeMap<String, Tally>, EvalError> {
    let mut out: BTreeMap<String, Tally> = BTreeMap::new();
    for (row, rec) in join(rows, dataset)? {
        let t = out.entry(dim.category_of(rec).into()).or_default();
        t.n += 1;
        t.successes += usize::from(SuccessCondition::MultiPass.holds(row));
    }
    Ok(out)
}

/// Multi-pass success rate per category value.
pub fn category_sr(
    rows: &[StageOutcomeRow],
    dataset: &[CommandRecord],
    dim: Dimension,
) -> Result<BTreeMap<String, f64>, EvalError> {
    Ok(category_tallies(rows, dataset, dim)?.into_iter().map(|(k, t)| (k, t.rate())).collect())
}

/// Multi-pass tallies over the product of two dimensions. Empty cells are absent.
pub fn cross_category_tallies(
    rows: &[StageOutcomeRow],
    dataset: &[CommandRecord],
    dims: (Dimension, Dimension),
) -> Result<BTreeMap<(String, String), Tally>, EvalError> {
    let mut out: BTreeMap<(String, String), Tally> = BTreeMap::new();
    for (row, rec) in join(rows, dataset)? {
        let key = (dims.0.category_of(rec).into(), dims.1.category_of(rec).into());
        let t = out.entry(key).or_default();
        t.n += 1;
        t.successes += usize::from(SuccessCondition::MultiPass.holds(row));
    }
    Ok(out)
}

pub fn cross_category_sr(
    rows: &[StageOutcomeRow],
    dataset: &[CommandRecord],
    dims: (Dimension, Dimension),
) -> Result<BTreeMap<(String, String), f64>, EvalError> {
    Ok(cross_category_tallies(rows, dataset, dims)?.into_iter().map(|(k, t)| (k, t.rate())).collect())
}

/// Inverse of the standard normal CDF (Acklam's rational approximation,
/// relative error below 1.2e-9).
#[allow(clippy::excessive_precision)]
pub fn probit(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] =
        [-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02, 6.680131188771972e+01, -1.328068155288572e+01];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
    const P_LOW: f64 = 0.02425;
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail(libm::sqrt(-2.0 * libm::log(p)))
    } else if p > 1.0 - P_LOW {
        -tail(libm::sqrt(-2.0 * libm::log(1.0 - p)))
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Wilson score interval for a binomial proportion, clamped to `[0, 1]`.
pub fn wilson_ci(successes: usize, n: usize, level: f64) -> Result<(f64, f64), EvalError> {
    if n == 0 || successes > n {
        return Err(EvalError::InvalidCount { successes, n });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(EvalError::InvalidLevel);
    }
    let z = probit(1.0 - (1.0 - level) / 2.0);
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z / denom * libm::sqrt(p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f));
    // Exact clamps at the boundaries; rounding could otherwise leave 1e-17.
    let lo = if successes == 0 { 0.0 } else { (center - half).clamp(0.0, 1.0) };
    let hi = if successes == n { 1.0 } else { (center + half).clamp(0.0, 1.0) };
    Ok((lo, hi))
}

/// Confidence level used in reports.
pub const REPORT_LEVEL: f64 = 0.95;

/// A rate with its 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub successes: usize,
    pub n: usize,
    pub rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Rate {
    pub fn from_tally(t: Tally) -> Result<Self, EvalError> {
        let (ci_lo, ci_hi) = wilson_ci(t.successes, t.n, REPORT_LEVEL)?;
        Ok(Self { successes: t.successes, n: t.n, rate: t.rate(), ci_lo, ci_hi })
    }
}

fn tally(rows: &[StageOutcomeRow], f: impl Fn(&StageOutcomeRow) -> bool) -> Tally {
    Tally { successes: rows.iter().filter(|r| f(r)).count(), n: rows.len() }
}

/// Outcome transitions between one stage and the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathFlow {
    pub from: Stage,
    pub to: Stage,
    /// 1 → 1
    pub kept: usize,
    /// 1 → 0
    pub failed: usize,
    /// 0 → 1
    pub recovered: usize,
    /// 0 → 0
    pub stayed_wrong: usize,
}

pub fn path_flows(rows: &[StageOutcomeRow]) -> Vec<PathFlow> {
    Stage::ALL
        .windows(2)
        .map(|w| {
            let (from, to) = (w[0], w[1]);
            let mut f = PathFlow { from, to, kept: 0, failed: 0, recovered: 0, stayed_wrong: 0 };
            for r in rows {
                match (r.get(from), r.get(to)) {
                    (true, true) => f.kept += 1,
                    (true, false) => f.failed += 1,
                    (false, true) => f.recovered += 1,
                    (false, false) => f.stayed_wrong += 1,
                }
            }
            f
        })
        .collect()
}

/// One cell of a cross-category table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCell {
    pub first: String,
    pub second: String,
    #[serde(flatten)]
    pub rate: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTable {
    pub dims: (Dimension, Dimension),
    pub cells: Vec<CrossCell>,
}

/// Dimension pairs reported as cross-category tables.
pub const CROSS_PAIRS: [(Dimension, Dimension); 2] =
    [(Dimension::Structure, Dimension::Type), (Dimension::Type, Dimension::Expression)];

/// All metrics of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub stage_accuracy: BTreeMap<Stage, Rate>,
    pub success: BTreeMap<SuccessCondition, Rate>,
    pub categories: BTreeMap<Dimension, BTreeMap<String, Rate>>,
    pub cross: Vec<CrossTable>,
    pub path_flows: Vec<PathFlow>,
    /// Commands by number of invalid cycles.
    pub ic_histogram: BTreeMap<u32, usize>,
}

pub fn build_report(rows: &[StageOutcomeRow], dataset: &[CommandRecord]) -> Result<MetricReport, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::NoRows);
    }
    let stage_accuracy =
        Stage::ALL.iter().map(|s| Ok((*s, Rate::from_tally(tally(rows, |r| r.get(*s)))?))).collect::<Result<_, _>>()?;
    let success = SuccessCondition::ALL
        .iter()
        .map(|c| Ok((*c, Rate::from_tally(tally(rows, |r| c.holds(r)))?)))
        .collect::<Result<_, _>>()?;
    let mut categories = BTreeMap::new();
    for dim in Dimension::ALL {
        let rates = category_tallies(rows, dataset, dim)?
            .into_iter()
            .map(|(k, t)| Ok((k, Rate::from_tally(t)?)))
            .collect::<Result<_, EvalError>>()?;
        categories.insert(dim, rates);
    }
    let mut cross = Vec::new();
    for dims in CROSS_PAIRS {
        let cells = cross_category_tallies(rows, dataset, dims)?
            .into_iter()
            .map(|((first, second), t)| Ok(CrossCell { first, second, rate: Rate::from_tally(t)? }))
            .collect::<Result<_, EvalError>>()?;
        cross.push(CrossTable { dims, cells });
    }
    let mut ic_histogram = BTreeMap::new();
    for r in rows {
        *ic_histogram.entry(r.ic).or_default() += 1;
    }
    Ok(MetricReport { n: rows.len(), stage_accuracy, success, categories, cross, path_flows: path_flows(rows), ic_histogram })
}

/// Flat report line: `section,key,n,successes,rate,ci_lo,ci_hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportLine {
    pub section: String,
    pub key: String,
    pub n: usize,
    pub successes: usize,
    pub rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Column names of the flat CSV report.
pub const REPORT_COLUMNS: [&str; 7] = ["section", "key", "n", "successes", "rate", "ci_lo", "ci_hi"];

impl MetricReport {
    /// The report as flat lines, totals first. Path flows use `n` for the
    /// pair count and `successes` for the 0 → 1 recoveries; their rate is
    /// the 1 → 0 failure share and carries no interval.
    pub fn lines(&self) -> Vec<ReportLine> {
        let line = |section: &str, key: &str, r: &Rate| ReportLine {
            section: section.into(),
            key: key.into(),
            n: r.n,
            successes: r.successes,
            rate: r.rate,
            ci_lo: r.ci_lo,
            ci_hi: r.ci_hi,
        };
        let mut out = Vec::new();
        out.push(ReportLine {
            section: "total".into(),
            key: "N".into(),
            n: self.n,
            successes: self.n,
            rate: 1.0,
            ci_lo: 1.0,
            ci_hi: 1.0,
        });
        for (s, r) in &self.stage_accuracy {
            out.push(line("stage", s.as_str(), r));
        }
        for (c, r) in &self.success {
            out.push(line("success", c.as_str(), r));
        }
        for (dim, rates) in &self.categories {
            for (k, r) in rates {
                out.push(line(&format!("category:{}", dim.as_str()), k, r));
            }
        }
        for t in &self.cross {
            let section = format!("cross:{}x{}", t.dims.0.as_str(), t.dims.1.as_str());
            for c in &t.cells {
                out.push(line(&section, &format!("{}x{}", c.first, c.second), &c.rate));
            }
        }
        for f in &self.path_flows {
            let n = f.kept + f.failed + f.recovered + f.stayed_wrong;
            out.push(ReportLine {
                section: "path_flow".into(),
                key: format!("{}->{}", f.from.as_str(), f.to.as_str()),
                n,
                successes: f.recovered,
                rate: if n == 0 { 0.0 } else { f.failed as f64 / n as f64 },
                ci_lo: 0.0,
                ci_hi: 0.0,
            });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn row(id: &str, bits: [u8; 6], ic: u32) -> StageOutcomeRow {
        let b = |i: usize| bits[i] == 1;
        StageOutcomeRow::new(id, b(0), b(1), b(2), b(3), b(4), b(5), ic)
    }

    fn record(id: &str, agent: AgentId, structure: StructureCat, ctype: TypeCat) -> CommandRecord {
        CommandRecord {
            id: id.into(),
            agent_gold: agent,
            raw_text: "x".into(),
            invalid_attempts: vec![],
            gold_revised: "x".into(),
            structure,
            ctype,
            expression: ExpressionCat::Baseline,
            speaker: None,
            gold_action: "REMOVE".into(),
            gold_params: Value::Null,
        }
    }

    #[test]
    fn parse_dataset_checks_schema() {
        let good = r#"{"id":"ir-001","agent_gold":"ir","raw_text":"Show age","gold_revised":"Show age","structure":"single","ctype":"explicit","expression":"baseline","gold_action":"SHOW","gold_params":{"fields":["age"]}}"#;
        let recs = parse_dataset(&format!("{good}\n\n")).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].agent_gold, AgentId::Ir);
        let back = serde_json::to_string(&recs[0]).unwrap();
        assert!(back.contains(r#""agent_gold":"ir""#));

        let bad_cat = good.replace(r#""ctype":"explicit""#, r#""ctype":"vague""#);
        let e = parse_dataset(&format!("{good}\n{bad_cat}")).unwrap_err();
        assert_eq!(e.line, 2);
        let dup = parse_dataset(&format!("{good}\n{good}")).unwrap_err();
        assert!(dup.message.contains("duplicate"));
        let bad_action = good.replace("\"SHOW\"", "\"ZOOM_IN\"");
        assert_eq!(parse_dataset(&bad_action).unwrap_err().line, 1);
        let bad_params = good.replace(r#"{"fields":["age"]}"#, r#"{"planes":1}"#);
        assert!(parse_dataset(&bad_params).unwrap_err().message.contains("gold_params"));
    }

    #[test]
    fn summary_counts() {
        let d = vec![
            record("a", AgentId::Ir, StructureCat::Single, TypeCat::Explicit),
            record("b", AgentId::Iv, StructureCat::Composite, TypeCat::Nlq),
            record("c", AgentId::Iv, StructureCat::Single, TypeCat::Nlq),
        ];
        let s = summarize(&d);
        assert_eq!(s.total, 3);
        assert_eq!(s.agent["iv"], 2);
        assert_eq!(s.structure["composite"], 1);
        assert_eq!(s.ctype["nlq"], 2);
    }

    #[test]
    fn ad_is_af_and_ap() {
        let r = row("x", [1, 1, 1, 1, 0, 1], 0);
        assert!(!r.ad);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains(r#""ad":0"#));
    }

    #[test]
    fn conditions() {
        let rows = vec![
            row("perfect", [1, 1, 1, 1, 1, 1], 0),
            row("stt-miss", [0, 1, 1, 1, 1, 1], 0),
            row("retry", [1, 1, 1, 1, 1, 1], 1),
            row("wrong", [1, 1, 1, 0, 0, 1], 0),
            row("too-many", [1, 1, 1, 1, 1, 1], 4),
        ];
        assert_eq!(success_rate(&rows, SuccessCondition::Strict).unwrap(), 1.0 / 5.0);
        assert_eq!(success_rate(&rows, SuccessCondition::SinglePass).unwrap(), 2.0 / 5.0);
        assert_eq!(success_rate(&rows, SuccessCondition::MultiPass).unwrap(), 3.0 / 5.0);
        assert_eq!(stage_accuracy(&rows, Stage::Stt).unwrap(), 4.0 / 5.0);
        assert_eq!(stage_accuracy(&[], Stage::Stt), Err(EvalError::NoRows));
    }

    #[test]
    fn categories_and_cross() {
        let d = vec![
            record("a", AgentId::Ir, StructureCat::Single, TypeCat::Explicit),
            record("b", AgentId::Iv, StructureCat::Composite, TypeCat::Nlq),
            record("c", AgentId::Iv, StructureCat::Single, TypeCat::Nlq),
        ];
        let rows = vec![row("a", [1; 6], 0), row("b", [1, 1, 1, 0, 1, 1], 0), row("c", [1; 6], 2)];
        let s = category_sr(&rows, &d, Dimension::Structure).unwrap();
        assert_eq!(s["single"], 1.0);
        assert_eq!(s["composite"], 0.0);
        assert!(!category_sr(&rows, &d, Dimension::Type).unwrap().contains_key("implicit"));
        let x = cross_category_sr(&rows, &d, (Dimension::Structure, Dimension::Type)).unwrap();
        assert_eq!(x.len(), 3);
        assert_eq!(x[&("single".into(), "nlq".into())], 1.0);
        assert!(matches!(Dimension::parse("colour"), Err(EvalError::UnknownDimension(_))));
        assert_eq!(Dimension::parse("ctype"), Ok(Dimension::Type));
        let orphan = vec![row("zzz", [1; 6], 0)];
        assert_eq!(category_sr(&orphan, &d, Dimension::Agent), Err(EvalError::UnknownRecord("zzz".into())));
    }

    #[test]
    fn wilson_reference_values() {
        let (lo, hi) = wilson_ci(32, 35, 0.95).unwrap();
        assert!((lo - 0.776).abs() < 0.005 && (hi - 0.970).abs() < 0.005, "{lo} {hi}");
        assert_eq!(wilson_ci(0, 10, 0.95).unwrap().0, 0.0);
        assert_eq!(wilson_ci(10, 10, 0.95).unwrap().1, 1.0);
        assert!(wilson_ci(11, 10, 0.95).is_err());
        assert!(wilson_ci(1, 0, 0.95).is_err());
        assert_eq!(wilson_ci(1, 2, 1.0), Err(EvalError::InvalidLevel));
    }

    #[test]
    fn probit_matches_statrs() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let n = Normal::new(0.0, 1.0).unwrap();
        for p in [1e-6, 0.001, 0.01, 0.02425, 0.1, 0.3, 0.5, 0.7, 0.9, 0.975, 0.995, 0.999999] {
            let expected = n.inverse_cdf(p);
            assert!((probit(p) - expected).abs() < 1e-6 * expected.abs().max(1.0), "p={p}");
        }
    }

    #[test]
    fn report_shape() {
        let d = vec![
            record("a", AgentId::Ir, StructureCat::Single, TypeCat::Explicit),
            record("b", AgentId::Iv, StructureCat::Composite, TypeCat::Nlq),
        ];
        let rows = vec![row("a", [1; 6], 0), row("b", [0, 1, 1, 1, 1, 1], 1)];
        let r = build_report(&rows, &d).unwrap();
        assert_eq!(r.n, 2);
        assert_eq!(r.path_flows.len(), 6);
        assert_eq!(r.path_flows[0].recovered, 1);
        let lines = r.lines();
        assert_eq!(lines[0].section, "total");
        assert_eq!(lines[0].n, 2);
        let json = serde_json::to_string(&r).unwrap();
        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        for l in &lines {
            assert!((0.0..=1.0).contains(&l.rate));
        }
    }

    fn any_row() -> impl Strategy<Value = StageOutcomeRow> {
        (proptest::collection::vec(any::<bool>(), 6), 0u32..6)
            .prop_map(|(b, ic)| StageOutcomeRow::new("r", b[0], b[1], b[2], b[3], b[4], b[5], ic))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn conditions_are_ordered(rows in proptest::collection::vec(any_row(), 1..60)) {
            let strict = success_rate(&rows, SuccessCondition::Strict).unwrap();
            let single = success_rate(&rows, SuccessCondition::SinglePass).unwrap();
            let multi = success_rate(&rows, SuccessCondition::MultiPass).unwrap();
            prop_assert!(strict <= single && single <= multi);
            for r in &rows {
                prop_assert_eq!(r.ad, r.af && r.ap);
            }
        }

        #[test]
        fn category_rates_average_to_overall(
            rows in proptest::collection::vec(any_row(), 1..40),
            cats in proptest::collection::vec(0usize..3, 40),
        ) {
            let types = [TypeCat::Explicit, TypeCat::Implicit, TypeCat::Nlq];
            let mut rows = rows;
            let mut d = Vec::new();
            for (i, r) in rows.iter_mut().enumerate() {
                r.id = format!("r{i}");
                d.push(record(&r.id, AgentId::Iv, StructureCat::Single, types[cats[i]]));
            }
            let overall = success_rate(&rows, SuccessCondition::MultiPass).unwrap();
            let tallies = category_tallies(&rows, &d, Dimension::Type).unwrap();
            let weighted: f64 = tallies.values().map(|t| t.rate() * t.n as f64).sum::<f64>() / rows.len() as f64;
            prop_assert!((weighted - overall).abs() < 1e-12);
            prop_assert_eq!(tallies.values().map(|t| t.n).sum::<usize>(), rows.len());
            let one = category_sr(&rows, &d, Dimension::Structure).unwrap();
            prop_assert!((one["single"] - overall).abs() < 1e-12);
            let cross = cross_category_tallies(&rows, &d, (Dimension::Structure, Dimension::Type)).unwrap();
            prop_assert_eq!(cross.values().map(|t| t.n).sum::<usize>(), rows.len());
        }

        #[test]
        fn wilson_contains_estimate(n in 1usize..500, frac in 0.0f64..=1.0) {
            let k = ((n as f64) * frac) as usize;
            let (lo, hi) = wilson_ci(k, n, 0.95).unwrap();
            let p = k as f64 / n as f64;
            prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
        }
    }
}

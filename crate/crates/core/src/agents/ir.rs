//! Information-retrieval agent: patient data as a text overlay.
//!
//! The LLM proposes SHOW/HIDE plus a per-column inclusion probability.
//! Columns at or above the threshold are formatted one per line, in
//! manifest order, and drawn in the top-right corner for the whole clip.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{ask_object, get_bool, pick_action, state_json, AgentError};
use crate::llm::ChatBackend;
use crate::model::AgentId;
use crate::text::normalize;
use crate::timeline::{Anchor, OverlayDirective, Payload};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Shown when a selected column has no value in the record.
pub const MISSING_VALUE: &str = "—";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Text,
    /// Number followed by an optional unit (`None` drops the unit).
    NumberWithUnit {
        #[serde(default)]
        unit: Option<String>,
    },
    /// `{key}` placeholders filled from other record keys.
    Composite { template: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub id: String,
    pub label: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
    /// Part of the default "patient information" set.
    #[serde(default)]
    pub core: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ManifestError {
    #[error("duplicate column id {0:?}")]
    DuplicateColumn(String),
    #[error("alias {alias:?} refers to unknown column {column:?}")]
    DanglingAlias { alias: String, column: String },
    #[error("manifest has no columns")]
    Empty,
}

/// Ordered patient-data columns plus phrase aliases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnManifest {
    pub columns: Vec<Column>,
    /// Phrase → column ids, for expressions like "physical information".
    #[serde(default)]
    pub aliases: BTreeMap<String, Vec<String>>,
}

fn col(id: &str, label: &str, kind: ColumnKind, core: bool) -> Column {
    Column { id: id.into(), label: label.into(), kind, core }
}

impl Default for ColumnManifest {
    fn default() -> Self {
        let unit = |u: Option<&str>| ColumnKind::NumberWithUnit { unit: u.map(String::from) };
        let composite = |t: &str| ColumnKind::Composite { template: t.into() };
        let columns = alloc::vec![
            col("sex_age", "Sex/Age", composite("{sex}/{age}"), true),
            col("sex", "Sex", ColumnKind::Text, false),
            col("age", "Age", unit(None), false),
            col("height", "Height", unit(Some("cm")), true),
            col("weight", "Weight", unit(Some("kg")), true),
            col("diagnosis", "Diagnosis", ColumnKind::Text, true),
            col("comorbidities", "Comorbidities", ColumnKind::Text, true),
            col("fev1", "FEV1", composite("{fev1_l} L ({fev1_pct}%)"), true),
            col("fvc", "FVC", composite("{fvc_l} L ({fvc_pct}%)"), true),
            col("surgery", "Surgery", ColumnKind::Text, true),
            col("tumor", "Tumor", ColumnKind::Text, true),
        ];
        let core: Vec<String> = columns.iter().filter(|c| c.core).map(|c| c.id.clone()).collect();
        let ids = |xs: &[&str]| xs.iter().map(|s| String::from(*s)).collect::<Vec<_>>();
        let mut aliases = BTreeMap::new();
        for phrase in ["patient information", "patient info", "patient data", "clinical information"] {
            aliases.insert(phrase.into(), core.clone());
        }
        for phrase in ["physical information", "physical info", "physical", "body measurements"] {
            aliases.insert(phrase.into(), ids(&["height", "weight"]));
        }
        for phrase in ["pft", "pft info", "pulmonary function test", "pulmonary function", "lung function"] {
            aliases.insert(phrase.into(), ids(&["fev1", "fvc"]));
        }
        aliases.insert("gender".into(), ids(&["sex"]));
        aliases.insert("demographics".into(), ids(&["sex_age"]));
        aliases.insert("pre existing condition".into(), ids(&["comorbidities"]));
        aliases.insert("surgery information".into(), ids(&["surgery"]));
        aliases.insert("tumor information".into(), ids(&["tumor"]));
        Self { columns, aliases }
    }
}

impl ColumnManifest {
    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.columns.is_empty() {
            return Err(ManifestError::Empty);
        }
        let mut seen = BTreeSet::new();
        for c in &self.columns {
            if !seen.insert(c.id.as_str()) {
                return Err(ManifestError::DuplicateColumn(c.id.clone()));
            }
        }
        for (alias, targets) in &self.aliases {
            if let Some(bad) = targets.iter().find(|t| !seen.contains(t.as_str())) {
                return Err(ManifestError::DanglingAlias { alias: alias.clone(), column: bad.clone() });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.id == id)
    }

    /// Column ids a field name or phrase refers to (empty if unknown).
    pub fn resolve(&self, name: &str) -> Vec<&str> {
        let n = normalize(name);
        if let Some(c) = self.columns.iter().find(|c| normalize(&c.id) == n || normalize(&c.label) == n) {
            return alloc::vec![c.id.as_str()];
        }
        self.aliases
            .iter()
            .find(|(k, _)| normalize(k) == n)
            .map(|(_, ids)| ids.iter().map(String::as_str).collect())
            .unwrap_or_default()
    }

    /// Every phrase that names a column (ids, labels, aliases), normalised.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut v: Vec<String> = self.columns.iter().flat_map(|c| [normalize(&c.id), normalize(&c.label)]).collect();
        v.extend(self.aliases.keys().map(|k| normalize(k)));
        v.sort();
        v.dedup();
        v
    }
}

/// Patient values keyed by column id (and composite part keys).
pub type PatientRecord = BTreeMap<String, Value>;

/// Synthetic record for demos and tests. Not real patient data.
pub fn sample_record() -> PatientRecord {
    let pairs: [(&str, Value); 13] = [
        ("sex", "M".into()),
        ("age", 63.into()),
        ("height", 172.into()),
        ("weight", 68.into()),
        ("diagnosis", "RLL adenocarcinoma".into()),
        ("comorbidities", "Hypertension, type 2 diabetes".into()),
        ("fev1_l", serde_json::json!(2.1)),
        ("fev1_pct", 78.into()),
        ("fvc_l", serde_json::json!(3.2)),
        ("fvc_pct", 85.into()),
        ("surgery", "Robotic RLL lobectomy".into()),
        ("tumor", "2.3 cm solid nodule, RLL superior segment".into()),
        ("patient_id", "SYNTH-0001".into()),
    ];
    pairs.into_iter().map(|(k, v)| (String::from(k), v)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum IrAction {
    Show,
    Hide,
}

impl IrAction {
    pub fn as_str(self) -> &'static str {
        match self {
            IrAction::Show => "SHOW",
            IrAction::Hide => "HIDE",
        }
    }
}

/// Agent state: which columns are on screen and the rendered text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrState {
    pub y: Vec<bool>,
    pub s: String,
}

impl IrState {
    /// Nothing displayed.
    pub fn empty(manifest: &ColumnManifest) -> Self {
        Self { y: alloc::vec![false; manifest.len()], s: String::new() }
    }

    pub fn is_clear(&self) -> bool {
        self.s.is_empty() && self.y.iter().all(|b| !b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrDecision {
    pub action: IrAction,
    /// Inclusion probability for every manifest column.
    pub field_probs: BTreeMap<String, f64>,
}

/// Parameters compared during scoring: the ids that end up displayed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrParams {
    #[serde(default)]
    pub fields: BTreeSet<String>,
}

const SYSTEM_PROMPT: &str = "You are the information retrieval agent of a surgical assistant. \
Decide whether the command asks to SHOW patient information or to HIDE it (\"Reset\" and \"Initialize\" mean HIDE), \
and give, for every available data column, the probability that it should be displayed. \
Map broad phrases to specific columns using the aliases listed. \
Answer only with JSON: {\"action_probs\": {\"SHOW\": p, \"HIDE\": p}, \"fields\": {\"<column id>\": p, ...}}.";

fn user_prompt(cmd: &str, manifest: &ColumnManifest, state: &IrState) -> String {
    let mut p = String::from("Available columns:\n");
    for c in &manifest.columns {
        p.push_str(&format!("- {} ({})\n", c.id, c.label));
    }
    p.push_str("Aliases:\n");
    for (k, v) in &manifest.aliases {
        p.push_str(&format!("- \"{}\" -> {}\n", k, v.join(", ")));
    }
    p.push_str(&format!("Current state: {}\nCommand: {}\n", state_json(state), cmd));
    p
}

/// Reads an IR decision object. `fields` may be a map of probabilities or a list of names.
pub fn decode_ir_decision(obj: &Map<String, Value>, manifest: &ColumnManifest) -> Result<IrDecision, AgentError> {
    let action = if get_bool(obj, "reset") {
        IrAction::Hide
    } else {
        pick_action(obj, &[(IrAction::Show, "SHOW"), (IrAction::Hide, "HIDE")])?
    };
    let mut field_probs: BTreeMap<String, f64> = manifest.columns.iter().map(|c| (c.id.clone(), 0.0)).collect();
    let mut bump = |name: &str, p: f64| {
        let ids = manifest.resolve(name);
        if ids.is_empty() {
            log::warn!("IR decision names unknown field {name:?}");
        }
        for id in ids {
            let slot = field_probs.get_mut(id).expect("resolved ids exist");
            *slot = slot.max(p.clamp(0.0, 1.0));
        }
    };
    match obj.get("fields") {
        Some(Value::Object(m)) => {
            for (k, v) in m {
                bump(k, v.as_f64().unwrap_or(0.0));
            }
        }
        Some(Value::Array(items)) => {
            for name in items.iter().filter_map(Value::as_str) {
                bump(name, 1.0);
            }
        }
        _ => {}
    }
    Ok(IrDecision { action, field_probs })
}

/// Asks the LLM for an action and field probabilities.
pub fn determine_action_ir(
    cmd: &str,
    manifest: &ColumnManifest,
    state: &IrState,
    backend: &mut dyn ChatBackend,
) -> Result<IrDecision, AgentError> {
    let obj = ask_object(backend, SYSTEM_PROMPT, user_prompt(cmd, manifest, state), super::agent_label(AgentId::Ir, cmd))?;
    decode_ir_decision(&obj, manifest)
}

/// Indicator vector in manifest order: `p >= threshold`, all zero for HIDE.
pub fn threshold_fields(decision: &IrDecision, threshold: f64, manifest: &ColumnManifest) -> Vec<bool> {
    manifest
        .columns
        .iter()
        .map(|c| decision.action == IrAction::Show && decision.field_probs.get(&c.id).is_some_and(|p| *p >= threshold))
        .collect()
}

pub fn select_columns<'m>(y: &[bool], manifest: &'m ColumnManifest) -> Vec<&'m Column> {
    manifest.columns.iter().zip(y).filter(|(_, on)| **on).map(|(c, _)| c).collect()
}

fn value_text(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) if s.trim().is_empty() => None,
        Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

fn fill_template(template: &str, record: &PatientRecord) -> Option<String> {
    let mut out = String::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = open + rest[open..].find('}')?;
        let key = &rest[open + 1..close];
        out.push_str(&value_text(record.get(key)?)?);
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    Some(out)
}

/// One display line for a column, e.g. `FEV1: 2.1 L (78%)`.
pub fn format_field(column: &Column, record: &PatientRecord) -> String {
    let body = match &column.kind {
        ColumnKind::Text => record.get(&column.id).and_then(value_text),
        ColumnKind::NumberWithUnit { unit } => record.get(&column.id).and_then(value_text).map(|v| match unit {
            Some(u) => format!("{v} {u}"),
            None => v,
        }),
        ColumnKind::Composite { template } => fill_template(template, record),
    };
    format!("{}: {}", column.label, body.as_deref().unwrap_or(MISSING_VALUE))
}

/// Newline-joined formatted fields, no trailing newline.
pub fn compose_info_string(columns: &[&Column], record: &PatientRecord) -> String {
    columns.iter().map(|c| format_field(c, record)).collect::<Vec<_>>().join("\n")
}

/// Applies a decision: new state plus the overlay directive for the clip.
pub fn apply_ir(
    decision: &IrDecision,
    manifest: &ColumnManifest,
    record: &PatientRecord,
    threshold: f64,
) -> (IrState, OverlayDirective) {
    let y = threshold_fields(decision, threshold, manifest);
    let chosen = select_columns(&y, manifest);
    if chosen.is_empty() {
        let clear = OverlayDirective::hold(Anchor::TopRight, Payload::ClearOverlay);
        return (IrState::empty(manifest), clear);
    }
    let s = compose_info_string(&chosen, record);
    let directive = OverlayDirective::hold(Anchor::TopRight, Payload::TextOverlay { text: s.clone() });
    (IrState { y, s }, directive)
}

/// Scoring view of a decision.
pub fn params_of(decision: &IrDecision, threshold: f64, manifest: &ColumnManifest) -> IrParams {
    let y = threshold_fields(decision, threshold, manifest);
    IrParams { fields: select_columns(&y, manifest).into_iter().map(|c| c.id.clone()).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{labelled, MockBackend};

    fn decision(action: IrAction, probs: &[(&str, f64)]) -> IrDecision {
        let m = ColumnManifest::default();
        let mut field_probs: BTreeMap<String, f64> = m.columns.iter().map(|c| (c.id.clone(), 0.0)).collect();
        for (k, p) in probs {
            field_probs.insert((*k).into(), *p);
        }
        IrDecision { action, field_probs }
    }

    #[test]
    fn default_manifest_is_valid() {
        let m = ColumnManifest::default();
        m.validate().unwrap();
        assert_eq!(m.resolve("physical information"), ["height", "weight"]);
        assert_eq!(m.resolve("FEV1"), ["fev1"]);
        assert!(m.resolve("vital sign").is_empty());
    }

    #[test]
    fn manifest_errors() {
        let mut m = ColumnManifest::default();
        m.aliases.insert("bogus".into(), alloc::vec!["nope".into()]);
        assert!(matches!(m.validate(), Err(ManifestError::DanglingAlias { .. })));
        let mut m = ColumnManifest::default();
        let dup = m.columns[0].clone();
        m.columns.push(dup);
        assert_eq!(m.validate(), Err(ManifestError::DuplicateColumn("sex_age".into())));
    }

    #[test]
    fn threshold_basic_hide_and_boundary() {
        let m = ColumnManifest::default();
        let d = decision(IrAction::Show, &[("age", 0.9), ("sex", 0.1)]);
        let y = threshold_fields(&d, 0.5, &m);
        assert_eq!(select_columns(&y, &m).iter().map(|c| c.id.as_str()).collect::<Vec<_>>(), ["age"]);

        let hide = decision(IrAction::Hide, &[("age", 1.0), ("sex", 1.0)]);
        assert!(threshold_fields(&hide, 0.5, &m).iter().all(|b| !b));

        let at = decision(IrAction::Show, &m.columns.iter().map(|c| (c.id.as_str(), 0.5)).collect::<Vec<_>>());
        assert!(threshold_fields(&at, 0.5, &m).iter().all(|b| *b));
    }

    #[test]
    fn select_columns_cases() {
        let m = ColumnManifest::default();
        assert!(select_columns(&alloc::vec![false; m.len()], &m).is_empty());
        assert_eq!(select_columns(&alloc::vec![true; m.len()], &m).len(), m.len());
        let mut y = alloc::vec![false; m.len()];
        y[m.index_of("fvc").unwrap()] = true;
        y[m.index_of("height").unwrap()] = true;
        let ids: Vec<_> = select_columns(&y, &m).iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["height", "fvc"]);
    }

    #[test]
    fn formatting_rules() {
        let m = ColumnManifest::default();
        let r = sample_record();
        let get = |id: &str| &m.columns[m.index_of(id).unwrap()];
        assert_eq!(format_field(get("fev1"), &r), "FEV1: 2.1 L (78%)");
        assert_eq!(format_field(get("sex_age"), &r), "Sex/Age: M/63");
        assert_eq!(format_field(get("age"), &r), "Age: 63");
        assert_eq!(format_field(get("height"), &r), "Height: 172 cm");

        let mut r2 = PatientRecord::new();
        r2.insert("diagnosis".into(), "LUL adenocarcinoma".into());
        assert_eq!(format_field(get("diagnosis"), &r2), "Diagnosis: LUL adenocarcinoma");
        assert_eq!(format_field(get("fev1"), &r2), "FEV1: —");
        assert_eq!(format_field(get("weight"), &r2), "Weight: —");
    }

    #[test]
    fn compose_delimiters() {
        let m = ColumnManifest::default();
        let r = sample_record();
        let one = [&m.columns[2]];
        assert!(!compose_info_string(&one, &r).contains('\n'));
        let two = [&m.columns[2], &m.columns[3]];
        assert_eq!(compose_info_string(&two, &r).matches('\n').count(), 1);
        assert_eq!(compose_info_string(&[], &r), "");
    }

    #[test]
    fn apply_show_hide_round_trip() {
        let m = ColumnManifest::default();
        let r = sample_record();
        let (state, d) = apply_ir(&decision(IrAction::Show, &[("age", 0.95)]), &m, &r, 0.5);
        assert_eq!(state.s, "Age: 63");
        assert_eq!(d.payload, Payload::TextOverlay { text: "Age: 63".into() });
        assert_eq!(d.anchor, Anchor::TopRight);
        assert_eq!(d.span, (0.0, 10.0));

        let (cleared, d) = apply_ir(&decision(IrAction::Hide, &[]), &m, &r, 0.5);
        assert_eq!(cleared, IrState::empty(&m));
        assert_eq!(d.payload, Payload::ClearOverlay);
    }

    #[test]
    fn decode_aliases_lists_and_reset() {
        let m = ColumnManifest::default();
        let obj = serde_json::json!({"action": "SHOW", "fields": {"physical information": 0.8, "age": 0.2}});
        let d = decode_ir_decision(obj.as_object().unwrap(), &m).unwrap();
        assert_eq!(d.field_probs["height"], 0.8);
        assert_eq!(d.field_probs["weight"], 0.8);
        assert_eq!(d.field_probs["age"], 0.2);
        assert_eq!(d.field_probs.len(), m.len());

        let obj = serde_json::json!({"action": "show", "fields": ["PFT"]});
        let d = decode_ir_decision(obj.as_object().unwrap(), &m).unwrap();
        assert_eq!(params_of(&d, 0.5, &m).fields.into_iter().collect::<Vec<_>>(), ["fev1", "fvc"]);

        let obj = serde_json::json!({"reset": true});
        assert_eq!(decode_ir_decision(obj.as_object().unwrap(), &m).unwrap().action, IrAction::Hide);
    }

    #[test]
    fn determine_action_examples() {
        let m = ColumnManifest::default();
        let s = IrState::empty(&m);
        let script = labelled(
            &[
                (
                    "ir_agent:Show patient information",
                    r#"{"action_probs":{"SHOW":0.97,"HIDE":0.03},"fields":{"patient information":0.9}}"#,
                ),
                ("ir_agent:Reset", r#"{"action_probs":{"SHOW":0.1,"HIDE":0.9},"fields":{}}"#),
                ("ir_agent:How old is the patient?", r#"{"action":"SHOW","fields":{"age":0.96,"sex_age":0.3}}"#),
            ],
            true,
        );
        let mut mock = MockBackend::new(script);
        let d = determine_action_ir("Show patient information", &m, &s, &mut mock).unwrap();
        assert_eq!(d.action, IrAction::Show);
        for c in m.columns.iter().filter(|c| c.core) {
            assert!(d.field_probs[&c.id] >= DEFAULT_THRESHOLD, "{}", c.id);
        }
        let d = determine_action_ir("Reset", &m, &s, &mut mock).unwrap();
        assert_eq!(d.action, IrAction::Hide);
        assert!(d.field_probs.values().all(|p| *p == 0.0));
        let d = determine_action_ir("How old is the patient?", &m, &s, &mut mock).unwrap();
        assert_eq!(params_of(&d, 0.5, &m).fields.into_iter().collect::<Vec<_>>(), ["age"]);

        let mut bad = MockBackend::new(labelled(&[("ir_agent:x", "sorry")], true));
        assert!(matches!(determine_action_ir("x", &m, &s, &mut bad), Err(AgentError::Parse(_))));
    }
}

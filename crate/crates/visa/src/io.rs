//! File formats: datasets, mock scripts, overrides, manifests, patient
//! records, correction rules and CT volumes.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use visa_core::agents::ar::StructureManifest;
use visa_core::agents::ir::{ColumnManifest, PatientRecord};
use visa_core::agents::volume::{Volume, VolumeHeader};
use visa_core::agents::{AgentParams, AgentResources};
use visa_core::eval::{parse_dataset, summarize, CommandRecord, DistributionSummary};
use visa_core::llm::MockScript;
use visa_core::orchestrator::engine::Resources;
use visa_core::stages::CorrectionRules;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read(path)?).with_context(|| format!("invalid JSON in {}", path.display()))
}

/// Parses a dataset and checks IR gold fields against `manifest`.
pub fn parse_dataset_checked(text: &str, manifest: &ColumnManifest) -> Result<Vec<CommandRecord>> {
    let records = parse_dataset(text)?;
    for r in &records {
        if let Ok(AgentParams::Ir(p)) = r.gold_params_typed() {
            if let Some(unknown) = p.fields.iter().find(|f| manifest.index_of(f).is_none()) {
                bail!("record {}: gold field {unknown:?} is not a manifest column", r.id);
            }
        }
    }
    Ok(records)
}

/// Loads a JSON-lines dataset and returns it with its category counts.
pub fn load_dataset(path: &Path, manifest: &ColumnManifest) -> Result<(Vec<CommandRecord>, DistributionSummary)> {
    let records =
        parse_dataset_checked(&read(path)?, manifest).with_context(|| format!("invalid dataset {}", path.display()))?;
    let summary = summarize(&records);
    Ok((records, summary))
}

pub fn load_mock_script(path: &Path, strict: bool) -> Result<MockScript> {
    MockScript::from_jsonl(&read(path)?, strict).with_context(|| format!("invalid mock script {}", path.display()))
}

/// Stage whose scripted reply an [`Override`] replaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverrideStage {
    CorrectValidate,
    CommandReasoning,
    Agent,
}

/// A scripted model mistake for one dataset record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Override {
    pub id: String,
    pub stage: OverrideStage,
    /// The reply the model gives instead of the gold one.
    pub response: Value,
}

pub fn parse_overrides(text: &str) -> Result<Vec<Override>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let o: Override = serde_json::from_str(line).with_context(|| format!("overrides line {}", i + 1))?;
        if !seen.insert((o.id.clone(), o.stage)) {
            bail!("overrides line {}: duplicate override for {} / {:?}", i + 1, o.id, o.stage);
        }
        out.push(o);
    }
    Ok(out)
}

pub fn load_overrides(path: &Path) -> Result<Vec<Override>> {
    parse_overrides(&read(path)?).with_context(|| format!("invalid overrides {}", path.display()))
}

pub fn load_ir_manifest(path: &Path) -> Result<ColumnManifest> {
    let m: ColumnManifest = read_json(path)?;
    m.validate().with_context(|| format!("invalid column manifest {}", path.display()))?;
    Ok(m)
}

pub fn load_ar_manifest(path: &Path) -> Result<StructureManifest> {
    let m: StructureManifest = read_json(path)?;
    m.validate().with_context(|| format!("invalid structure manifest {}", path.display()))?;
    Ok(m)
}

pub fn load_record(path: &Path) -> Result<PatientRecord> {
    read_json(path)
}

pub fn load_rules(path: &Path) -> Result<CorrectionRules> {
    read_json(path)
}

/// Reads `<stem>.json` (header) and `<stem>.raw` (voxels).
pub fn load_volume(header_path: &Path) -> Result<Volume> {
    let header: VolumeHeader = read_json(header_path)?;
    let raw = header_path.with_extension("raw");
    let bytes = fs::read(&raw).with_context(|| format!("cannot read {}", raw.display()))?;
    Volume::from_bytes(&header, &bytes).with_context(|| format!("invalid volume {}", raw.display()))
}

/// Writes a volume as `<stem>.json` + `<stem>.raw`.
pub fn save_volume(volume: &Volume, header_path: &Path) -> Result<()> {
    let (header, bytes) = volume.to_bytes();
    write(header_path, &(serde_json::to_string_pretty(&header)? + "\n"))?;
    let raw = header_path.with_extension("raw");
    fs::write(&raw, bytes).with_context(|| format!("cannot write {}", raw.display()))
}

pub fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Optional resource files; anything not given uses the built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Eq, clap::Args)]
pub struct ResourceFiles {
    /// IR column manifest (JSON).
    #[arg(long)]
    pub columns: Option<PathBuf>,
    /// Patient record (JSON object).
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// AR structure manifest (JSON).
    #[arg(long)]
    pub structures: Option<PathBuf>,
    /// CT volume header (JSON, voxels in the sibling .raw file); sets the slice bounds.
    #[arg(long)]
    pub volume: Option<PathBuf>,
    /// Extra correction rules (JSON object, misheard -> intended), merged over the defaults.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Frames per second of overlay timelines.
    #[arg(long)]
    pub fps: Option<u32>,
}

impl ResourceFiles {
    pub fn load(&self) -> Result<Resources> {
        let mut agents = AgentResources::default();
        if let Some(p) = &self.columns {
            agents.ir_manifest = load_ir_manifest(p)?;
        }
        if let Some(p) = &self.record {
            agents.record = load_record(p)?;
        }
        if let Some(p) = &self.structures {
            agents.ar_manifest = load_ar_manifest(p)?;
        }
        if let Some(p) = &self.volume {
            agents.bounds = load_volume(p)?.bounds();
        }
        if let Some(fps) = self.fps {
            if fps == 0 {
                bail!("--fps must be positive");
            }
            agents.fps = fps;
        }
        let mut rules = CorrectionRules::default();
        if let Some(p) = &self.rules {
            rules.extend(load_rules(p)?);
        }
        Ok(Resources::new(agents, rules))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REC: &str = r#"{"id":"a","agent_gold":"ir","raw_text":"Show age","gold_revised":"Show age","structure":"single","ctype":"explicit","expression":"baseline","gold_action":"SHOW","gold_params":{"fields":["age"]}}"#;

    #[test]
    fn dataset_fields_are_checked_against_the_manifest() {
        let m = ColumnManifest::default();
        assert_eq!(parse_dataset_checked(REC, &m).unwrap().len(), 1);
        let bad = REC.replace("[\"age\"]", "[\"shoe_size\"]");
        let err = parse_dataset_checked(&bad, &m).unwrap_err();
        assert!(format!("{err:#}").contains("shoe_size"));
    }

    #[test]
    fn overrides_parse_and_reject_duplicates() {
        let line = r#"{"id":"t2-01","stage":"agent","response":{"action":"ZOOM_OUT"}}"#;
        assert_eq!(parse_overrides(line).unwrap()[0].stage, OverrideStage::Agent);
        assert!(parse_overrides(&format!("{line}\n{line}")).is_err());
        assert!(parse_overrides(r#"{"id":"x","stage":"stt","response":{}}"#).is_err());
    }

    #[test]
    fn volume_round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ct.json");
        let v = Volume::phantom([8, 6, 4]).unwrap();
        save_volume(&v, &path).unwrap();
        let back = load_volume(&path).unwrap();
        assert_eq!(back, v);
        let files = ResourceFiles { volume: Some(path), ..Default::default() };
        let res = files.load().unwrap();
        assert_eq!(res.agents.bounds, v.bounds());
    }

    #[test]
    fn resource_files_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let rules = dir.path().join("rules.json");
        fs::write(&rules, r#"{"sea tea": "CT"}"#).unwrap();
        let res = ResourceFiles { rules: Some(rules), fps: Some(10), ..Default::default() }.load().unwrap();
        assert_eq!(res.rules.0.get("sea tea").map(String::as_str), Some("CT"));
        assert_eq!(res.rules.0.get("city").map(String::as_str), Some("CT"));
        assert_eq!(res.agents.fps, 10);
        assert!(ResourceFiles { fps: Some(0), ..Default::default() }.load().is_err());
        let missing = ResourceFiles { record: Some(dir.path().join("nope.json")), ..Default::default() };
        assert!(missing.load().is_err());
    }
}

//! Builds deterministic mock scripts from annotated datasets.
//!
//! The script answers every orchestrator prompt with the fallback function
//! and, per record in dataset order, queues one reply for each stage:
//! correction (one invalid reply per `invalid_attempts` entry, then the
//! gold revision), reasoning (the gold agent) and the agent (the gold
//! action and parameters). [`Override`]s replace individual replies to
//! reproduce model mistakes.

use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};
use visa_core::agents::{agent_label, encode_reply};
use visa_core::eval::CommandRecord;
use visa_core::llm::{Matcher, MockScript};
use visa_core::orchestrator::script_ideal_orchestrator;
use visa_core::stages::{cc_label, cr_label};
use visa_core::AgentId;

use crate::io::{Override, OverrideStage};

fn reply_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Strict script that replays `records` in order.
pub fn build_mock_script(records: &[CommandRecord], overrides: &[Override]) -> Result<MockScript> {
    let mut by_id: BTreeMap<&str, BTreeMap<OverrideStage, &Value>> = BTreeMap::new();
    for o in overrides {
        by_id.entry(o.id.as_str()).or_default().insert(o.stage, &o.response);
    }
    for id in by_id.keys() {
        if !records.iter().any(|r| r.id == *id) {
            bail!("override for unknown record {id:?}");
        }
    }

    let mut script = MockScript::new(true);
    script_ideal_orchestrator(&mut script);
    for r in records {
        let ov = by_id.get(r.id.as_str());
        let get = |stage| ov.and_then(|m| m.get(&stage)).copied();
        for attempt in &r.invalid_attempts {
            script.push_once(Matcher::Label(cc_label(attempt)), json!({"revised": attempt, "valid": false}).to_string());
        }

        let cc = get(OverrideStage::CorrectValidate).cloned().unwrap_or_else(|| json!({"revised": r.gold_revised, "valid": true}));
        script.push_once(Matcher::Label(cc_label(&r.raw_text)), reply_text(&cc));
        if cc.get("valid") != Some(&Value::Bool(true)) {
            continue;
        }
        let revised = cc.get("revised").and_then(Value::as_str).unwrap_or(&r.gold_revised).to_string();

        let cr = get(OverrideStage::CommandReasoning)
            .cloned()
            .unwrap_or_else(|| json!({"agent": r.agent_gold.as_str(), "rationale": "annotated agent"}));
        script.push_once(Matcher::Label(cr_label(&revised)), reply_text(&cr));
        let agent = cr.get("agent").and_then(Value::as_str).and_then(AgentId::parse).unwrap_or(r.agent_gold);

        let reply = match get(OverrideStage::Agent) {
            Some(v) => reply_text(v),
            None => {
                let params = r.gold_params_typed().with_context(|| format!("record {}: gold_params", r.id))?;
                encode_reply(&r.gold_action, &params)
            }
        };
        script.push_once(Matcher::Label(agent_label(agent, &revised)), reply);
    }
    Ok(script)
}

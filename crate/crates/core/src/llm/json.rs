use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::{Map, Value};

use crate::model::FunctionId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("no JSON object found in model output")]
    NoJsonObject,
    #[error("malformed JSON object: {0}")]
    InvalidJson(String),
    #[error("missing required field `{0}`")]
    MissingField(String),
    #[error("field `{field}` has the wrong type (expected {expected})")]
    WrongType { field: String, expected: &'static str },
}

/// Returns the first balanced `{...}` in `text`, ignoring code-fence markers.
///
/// Braces inside JSON strings are skipped.
pub fn extract_json_object(text: &str) -> Result<&str, ParseError> {
    let bytes = text.as_bytes();
    let mut start = 0;
    while let Some(off) = text[start..].find('{') {
        let open = start + off;
        if let Some(close) = matching_brace(bytes, open) {
            return Ok(&text[open..=close]);
        }
        start = open + 1;
    }
    Err(ParseError::NoJsonObject)
}

fn matching_brace(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if in_str {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn object_from(text: &str) -> Result<Map<String, Value>, ParseError> {
    // Fence markers may sit between prose and the object; drop them first.
    let cleaned: String = text.replace("```json", "").replace("```JSON", "").replace("```", "");
    let raw = extract_json_object(&cleaned)?;
    match serde_json::from_str::<Value>(raw) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(ParseError::NoJsonObject),
        Err(e) => Err(ParseError::InvalidJson(e.to_string())),
    }
}

/// Something the parser adjusted or discarded.
#[derive(Debug, Clone, PartialEq)]
pub enum ParseNote {
    UnknownKey(String),
    NotANumber(String),
    Clamped { key: FunctionId, from: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityParse {
    pub probs: BTreeMap<FunctionId, f64>,
    pub notes: Vec<ParseNote>,
}

fn as_number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    }
}

/// Reads a function-name → probability object.
///
/// Keys outside `expected` are dropped, values are clamped into `[0, 1]`.
/// Absent functions are left absent. Duplicate keys resolve last-wins.
pub fn parse_probability_json(text: &str, expected: &[FunctionId]) -> Result<ProbabilityParse, ParseError> {
    let map = object_from(text)?;
    let mut probs = BTreeMap::new();
    let mut notes = Vec::new();
    for (key, value) in &map {
        let Some(f) = FunctionId::parse(key.trim()).filter(|f| expected.contains(f)) else {
            log::warn!("dropping unknown function key {key:?}");
            notes.push(ParseNote::UnknownKey(key.clone()));
            continue;
        };
        let Some(p) = as_number(value) else {
            notes.push(ParseNote::NotANumber(key.clone()));
            continue;
        };
        let clamped = p.clamp(0.0, 1.0);
        if clamped != p {
            notes.push(ParseNote::Clamped { key: f, from: p });
        }
        probs.insert(f, clamped);
    }
    Ok(ProbabilityParse { probs, notes })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Text,
    Bool,
    Number,
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldSpec {
    pub name: &'static str,
    pub kind: FieldKind,
    pub required: bool,
}

impl FieldSpec {
    pub const fn required(name: &'static str, kind: FieldKind) -> Self {
        Self { name, kind, required: true }
    }

    pub const fn optional(name: &'static str, kind: FieldKind) -> Self {
        Self { name, kind, required: false }
    }
}

fn coerce(field: &FieldSpec, v: Value) -> Result<Value, ParseError> {
    let wrong = |expected| ParseError::WrongType { field: field.name.into(), expected };
    match field.kind {
        FieldKind::Any => Ok(v),
        FieldKind::Text => match v {
            Value::String(_) => Ok(v),
            Value::Number(n) => Ok(Value::String(n.to_string())),
            _ => Err(wrong("string")),
        },
        FieldKind::Bool => match v {
            Value::Bool(_) => Ok(v),
            Value::String(s) => match crate::text::normalize(&s).as_str() {
                "true" | "yes" | "valid" => Ok(Value::Bool(true)),
                "false" | "no" | "invalid" => Ok(Value::Bool(false)),
                _ => Err(wrong("boolean")),
            },
            _ => Err(wrong("boolean")),
        },
        FieldKind::Number => as_number(&v).and_then(serde_json::Number::from_f64).map(Value::Number).ok_or(wrong("number")),
    }
}

/// Reads a stage output object against a field list.
///
/// Only the listed fields are returned. Missing optional fields are omitted.
pub fn parse_labeled_json(text: &str, schema: &[FieldSpec]) -> Result<BTreeMap<String, Value>, ParseError> {
    let mut map = object_from(text)?;
    let mut out = BTreeMap::new();
    for field in schema {
        match map.remove(field.name) {
            Some(Value::Null) | None if field.required => return Err(ParseError::MissingField(field.name.into())),
            Some(Value::Null) | None => {}
            Some(v) => {
                out.insert(field.name.into(), coerce(field, v)?);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: &[FunctionId] = &FunctionId::ALL;

    #[test]
    fn direct_parse() {
        let p = parse_probability_json(r#"{"stt": 0.9, "end": 0.1}"#, ALL).unwrap();
        assert_eq!(p.probs.len(), 2);
        assert_eq!(p.probs[&FunctionId::Stt], 0.9);
        assert_eq!(p.probs[&FunctionId::End], 0.1);
        assert!(p.notes.is_empty());
    }

    #[test]
    fn prose_wrapped_and_clamped() {
        let p = parse_probability_json(r#"Here is my answer: {"stt": 1.2}"#, ALL).unwrap();
        assert_eq!(p.probs[&FunctionId::Stt], 1.0);
        assert_eq!(p.notes, [ParseNote::Clamped { key: FunctionId::Stt, from: 1.2 }]);
    }

    #[test]
    fn no_json() {
        assert_eq!(parse_probability_json("no json here", ALL), Err(ParseError::NoJsonObject));
    }

    #[test]
    fn unknown_keys_dropped() {
        let p = parse_probability_json(r#"{"stt": 0.5, "fly": 0.4, "end": "0.1"}"#, ALL).unwrap();
        assert_eq!(p.probs.len(), 2);
        assert_eq!(p.probs[&FunctionId::End], 0.1);
        assert_eq!(p.notes, [ParseNote::UnknownKey("fly".into())]);
    }

    #[test]
    fn keys_outside_expected_set_dropped() {
        let p = parse_probability_json(r#"{"stt": 0.5, "end": 0.5}"#, &[FunctionId::Stt]).unwrap();
        assert_eq!(p.probs.keys().copied().collect::<Vec<_>>(), [FunctionId::Stt]);
    }

    #[test]
    fn duplicate_keys_last_wins() {
        let p = parse_probability_json(r#"{"stt": 0.2, "stt": 0.7}"#, ALL).unwrap();
        assert_eq!(p.probs[&FunctionId::Stt], 0.7);
    }

    #[test]
    fn fenced_block_with_braces_in_strings() {
        let text = "Reasoning {not json\n```json\n{\"revised\": \"a } b\", \"valid\": true}\n```";
        // The first `{` never balances, so the fenced object is picked up.
        let out = parse_labeled_json(
            text,
            &[FieldSpec::required("revised", FieldKind::Text), FieldSpec::required("valid", FieldKind::Bool)],
        )
        .unwrap();
        assert_eq!(out["revised"], Value::String("a } b".into()));
    }

    #[test]
    fn labeled_fields() {
        let schema =
            [FieldSpec::required("revised", FieldKind::Text), FieldSpec::required("valid", FieldKind::Bool)];
        let out = parse_labeled_json(r#"{"revised":"Show CT views","valid":true}"#, &schema).unwrap();
        assert_eq!(out["revised"], Value::String("Show CT views".into()));
        assert_eq!(out["valid"], Value::Bool(true));

        let cr = parse_labeled_json(r#"{"agent":"iv_agent"}"#, &[FieldSpec::required("agent", FieldKind::Text)]);
        assert_eq!(cr.unwrap()["agent"], Value::String("iv_agent".into()));

        assert_eq!(
            parse_labeled_json(r#"{"revised":"x"}"#, &schema),
            Err(ParseError::MissingField("valid".into()))
        );
    }

    #[test]
    fn bool_coercion_from_strings() {
        let schema = [FieldSpec::required("valid", FieldKind::Bool)];
        let out = parse_labeled_json(r#"{"valid":"False"}"#, &schema).unwrap();
        assert_eq!(out["valid"], Value::Bool(false));
        assert!(matches!(parse_labeled_json(r#"{"valid":3}"#, &schema), Err(ParseError::WrongType { .. })));
    }
}

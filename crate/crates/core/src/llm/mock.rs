use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ChatBackend, ChatRequest, ChatResponse, LlmError};

/// How a scripted entry recognises a request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    /// Exact equality with [`ChatRequest::label`].
    Label(String),
    /// Substring of the label or the user prompt.
    Substring(String),
}

impl Matcher {
    fn matches(&self, req: &ChatRequest) -> bool {
        match self {
            Matcher::Label(l) => req.label.as_deref() == Some(l.as_str()),
            Matcher::Substring(s) => {
                req.label.as_deref().is_some_and(|l| l.contains(s.as_str())) || req.user_prompt.contains(s.as_str())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockEntry {
    pub matcher: Matcher,
    pub response: String,
    /// Consumed after its first use.
    pub once: bool,
}

/// Ordered list of canned responses.
///
/// Non-strict scripts answer with the first live match and fall back to
/// `"{}"`. Strict scripts answer with the first live `once` entry (so
/// repeated once-entries form a queue), otherwise require exactly one
/// reusable match; no match is an error.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MockScript {
    pub entries: Vec<MockEntry>,
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("mock script line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

/// One JSON-lines record: `{"match"|"label": ..., "response": ..., "once": bool}`.
///
/// `response` may be a string or any JSON value (serialised compactly).
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptLine {
    #[serde(default, rename = "match", skip_serializing_if = "Option::is_none")]
    substring: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    response: Value,
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    once: bool,
}

impl MockScript {
    pub fn new(strict: bool) -> Self {
        Self { entries: Vec::new(), strict }
    }

    pub fn push(&mut self, matcher: Matcher, response: impl Into<String>) -> &mut Self {
        self.entries.push(MockEntry { matcher, response: response.into(), once: false });
        self
    }

    pub fn push_once(&mut self, matcher: Matcher, response: impl Into<String>) -> &mut Self {
        self.entries.push(MockEntry { matcher, response: response.into(), once: true });
        self
    }

    /// Parses the JSON-lines script format. Blank lines and `#` comments are skipped.
    pub fn from_jsonl(text: &str, strict: bool) -> Result<Self, ScriptError> {
        let mut script = Self::new(strict);
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |message: String| ScriptError { line: i + 1, message };
            let parsed: ScriptLine = serde_json::from_str(trimmed).map_err(|e| err(e.to_string()))?;
            let matcher = match (parsed.substring, parsed.label) {
                (Some(s), None) => Matcher::Substring(s),
                (None, Some(l)) => Matcher::Label(l),
                _ => return Err(err("exactly one of `match` or `label` is required".into())),
            };
            let response = match parsed.response {
                Value::String(s) => s,
                other => other.to_string(),
            };
            script.entries.push(MockEntry { matcher, response, once: parsed.once });
        }
        Ok(script)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let (substring, label) = match &e.matcher {
                Matcher::Substring(s) => (Some(s.clone()), None),
                Matcher::Label(l) => (None, Some(l.clone())),
            };
            let response = serde_json::from_str::<Value>(&e.response)
                .ok()
                .filter(Value::is_object)
                .unwrap_or_else(|| Value::String(e.response.clone()));
            let line = ScriptLine { substring, label, response, once: e.once };
            out.push_str(&serde_json::to_string(&line).expect("script line serialises"));
            out.push('\n');
        }
        out
    }
}

/// Deterministic scripted backend.
#[derive(Debug, Clone)]
pub struct MockBackend {
    script: MockScript,
    consumed: Vec<bool>,
    calls: Vec<ChatRequest>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        let consumed = alloc::vec![false; script.entries.len()];
        Self { script, consumed, calls: Vec::new() }
    }

    /// Every request seen so far, in order.
    pub fn calls(&self) -> &[ChatRequest] {
        &self.calls
    }

    /// Number of single-use entries not yet consumed.
    pub fn remaining_once(&self) -> usize {
        self.script.entries.iter().zip(&self.consumed).filter(|(e, used)| e.once && !**used).count()
    }

    fn live_matches<'a>(&'a self, req: &'a ChatRequest) -> impl Iterator<Item = usize> + 'a {
        self.script
            .entries
            .iter()
            .enumerate()
            .filter(move |(i, e)| !self.consumed[*i] && e.matcher.matches(req))
            .map(|(i, _)| i)
    }
}

impl ChatBackend for MockBackend {
    fn chat(&mut self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        self.calls.push(req.clone());
        let describe = || req.label.clone().unwrap_or_else(|| req.user_prompt.chars().take(80).collect());
        let hit = if self.script.strict {
            let hits: Vec<usize> = self.live_matches(req).collect();
            let first_once = hits.iter().copied().find(|i| self.script.entries[*i].once);
            match (first_once, hits.len()) {
                (Some(i), _) => Some(i),
                (None, 0) => return Err(LlmError::MockMiss(describe())),
                (None, 1) => Some(hits[0]),
                (None, count) => return Err(LlmError::MockAmbiguous { label: describe(), count }),
            }
        } else {
            self.live_matches(req).next()
        };
        let text = match hit {
            Some(i) => {
                if self.script.entries[i].once {
                    self.consumed[i] = true;
                }
                self.script.entries[i].response.clone()
            }
            None => {
                log::debug!("mock fallback for {}", describe());
                "{}".to_string()
            }
        };
        Ok(ChatResponse { text, latency_ms: 0.0 })
    }

    fn name(&self) -> &str {
        if self.script.strict {
            "mock-strict"
        } else {
            "mock"
        }
    }
}

/// Convenience for tests: one label → response per pair.
pub fn labelled(pairs: &[(&str, &str)], strict: bool) -> MockScript {
    let mut s = MockScript::new(strict);
    for (l, r) in pairs {
        s.push(Matcher::Label((*l).into()), *r);
    }
    s
}

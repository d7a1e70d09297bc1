//! Chat backend for OpenAI-compatible `/v1/chat/completions` servers
//! (hosted APIs, vLLM, llama.cpp, Ollama, ...).

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use visa_core::llm::{ChatBackend, ChatRequest, ChatResponse, LlmError};

/// Connection settings, usually taken from `VISA_LLM_*` variables.
#[derive(Debug, Clone, PartialEq, Eq, clap::Args)]
pub struct LiveConfig {
    /// Base URL of the server, without `/v1/chat/completions`.
    #[arg(long = "llm-url", env = "VISA_LLM_URL", default_value = "http://127.0.0.1:8000")]
    pub url: String,
    /// Model name sent with every request.
    #[arg(long = "llm-model", env = "VISA_LLM_MODEL", default_value = "default")]
    pub model: String,
    /// Bearer token, if the server needs one.
    #[arg(long = "llm-api-key", env = "VISA_LLM_API_KEY", hide_env_values = true)]
    pub api_key: Option<String>,
    /// Request timeout in seconds.
    #[arg(long = "llm-timeout", env = "VISA_LLM_TIMEOUT", default_value_t = 120)]
    pub timeout_s: u64,
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct Body<'a> {
    model: &'a str,
    messages: [Message<'a>; 2],
    temperature: f64,
    seed: i64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug)]
pub struct LiveBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    config: LiveConfig,
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let endpoint = format!("{}/v1/chat/completions", config.url.trim_end_matches('/'));
        Ok(Self { client, endpoint, config })
    }
}

impl ChatBackend for LiveBackend {
    fn chat(&mut self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let body = Body {
            model: &self.config.model,
            messages: [
                Message { role: "system", content: &req.system_prompt },
                Message { role: "user", content: &req.user_prompt },
            ],
            temperature: req.temperature,
            seed: req.seed,
            max_tokens: req.max_tokens,
        };
        let started = Instant::now();
        let mut http = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.config.api_key {
            http = http.bearer_auth(key);
        }
        let transport = |e: reqwest::Error| LlmError::Transport(e.to_string());
        let resp = http.send().map_err(transport)?;
        let status = resp.status();
        if !status.is_success() {
            let detail = resp.text().unwrap_or_default();
            return Err(LlmError::Transport(format!("HTTP {status}: {}", detail.chars().take(200).collect::<String>())));
        }
        let completion: Completion = resp.json().map_err(transport)?;
        let text = completion
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Transport("completion without message content".into()))?;
        let latency_ms = started.elapsed().as_secs_f64() * 1000.0;
        log::debug!("{:?} answered in {latency_ms:.0} ms", req.label);
        Ok(ChatResponse { text, latency_ms })
    }

    fn name(&self) -> &str {
        &self.config.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use axum::{extract::State, http::StatusCode, routing::post, Json, Router};
    use serde_json::{json, Value};
    use std::sync::{Arc, Mutex};

    type Seen = Arc<Mutex<Vec<(Option<String>, Value)>>>;

    /// Serves a fake completion endpoint on a random port.
    fn fake_server(status: StatusCode, reply: Value) -> (String, Seen) {
        let seen: Seen = Arc::default();
        let state = (seen.clone(), status, reply);
        let app = Router::new()
            .route(
                "/v1/chat/completions",
                post(
                    |State((seen, status, reply)): State<(Seen, StatusCode, Value)>,
                     headers: axum::http::HeaderMap,
                     Json(body): Json<Value>| async move {
                        let auth = headers.get("authorization").map(|h| h.to_str().unwrap().to_string());
                        seen.lock().unwrap().push((auth, body));
                        (status, Json(reply))
                    },
                ),
            )
            .with_state(state);
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        listener.set_nonblocking(true).unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        std::thread::spawn(move || {
            tokio::runtime::Runtime::new().unwrap().block_on(async move {
                let l = tokio::net::TcpListener::from_std(listener).unwrap();
                axum::serve(l, app).await.unwrap();
            })
        });
        (url, seen)
    }

    fn config(url: String) -> LiveConfig {
        LiveConfig { url, model: "test-model".into(), api_key: Some("k".into()), timeout_s: 5 }
    }

    #[test]
    fn sends_pinned_settings_and_reads_the_reply() {
        let (url, seen) =
            fake_server(StatusCode::OK, json!({"choices": [{"message": {"role": "assistant", "content": "{\"stt\": 0.9}"}}]}));
        let mut b = LiveBackend::new(config(url + "/")).unwrap();
        let mut req = ChatRequest::new("sys", "user");
        req.max_tokens = Some(64);
        let r = b.chat(&req).unwrap();
        assert_eq!(r.text, "{\"stt\": 0.9}");
        assert_eq!(b.name(), "test-model");
        let (auth, body) = seen.lock().unwrap()[0].clone();
        assert_eq!(auth.as_deref(), Some("Bearer k"));
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["seed"], 42);
        assert_eq!(body["max_tokens"], 64);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "user");
    }

    #[test]
    fn unlimited_generation_omits_max_tokens() {
        let (url, seen) = fake_server(StatusCode::OK, json!({"choices": [{"message": {"content": "ok"}}]}));
        LiveBackend::new(config(url)).unwrap().chat(&ChatRequest::new("s", "u")).unwrap();
        assert!(seen.lock().unwrap()[0].1.get("max_tokens").is_none());
    }

    #[test]
    fn http_errors_and_bad_bodies_are_transport_errors() {
        let (url, _) = fake_server(StatusCode::INTERNAL_SERVER_ERROR, json!({"error": "boom"}));
        let err = LiveBackend::new(config(url)).unwrap().chat(&ChatRequest::new("s", "u")).unwrap_err();
        assert!(matches!(err, LlmError::Transport(m) if m.contains("500")));

        let (url, _) = fake_server(StatusCode::OK, json!({"choices": []}));
        assert!(LiveBackend::new(config(url)).unwrap().chat(&ChatRequest::new("s", "u")).is_err());

        let mut closed = LiveBackend::new(config("http://127.0.0.1:9".into())).unwrap();
        assert!(matches!(closed.chat(&ChatRequest::new("s", "u")), Err(LlmError::Transport(_))));
    }
}

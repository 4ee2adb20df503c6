//! Blocking chat-completion client with retries and provider adapters.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::ElicitError;

fn default_attempts() -> usize {
    3
}

fn default_timeout_secs() -> u64 {
    120
}

/// Endpoint description. Credentials are read from the environment variable
/// named by `api_key_env`, never from the config file itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub provider: String,
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u64,
    pub api_key_env: String,
    #[serde(default = "default_attempts")]
    pub attempts: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_max_tokens() -> u64 {
    4096
}

impl EndpointConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<EndpointConfig, ElicitError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ElicitError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| ElicitError::Config {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }
}

/// A successful chat completion.
#[derive(Debug, Clone)]
pub struct LlmResponse {
    pub text: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

enum Adapter {
    OpenAiCompat,
    Anthropic,
}

impl Adapter {
    fn for_provider(provider: &str) -> Adapter {
        if provider.eq_ignore_ascii_case("anthropic") {
            Adapter::Anthropic
        } else {
            Adapter::OpenAiCompat
        }
    }

    fn url(&self, base: &str) -> String {
        let base = base.trim_end_matches('/');
        match self {
            Adapter::OpenAiCompat => format!("{base}/chat/completions"),
            Adapter::Anthropic => format!("{base}/v1/messages"),
        }
    }

    fn body(&self, config: &EndpointConfig, prompt: &str) -> Value {
        match self {
            Adapter::OpenAiCompat => json!({
                "model": config.model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": config.temperature,
                "max_tokens": config.max_tokens,
            }),
            Adapter::Anthropic => json!({
                "model": config.model,
                "max_tokens": config.max_tokens,
                "temperature": config.temperature,
                "messages": [{"role": "user", "content": prompt}],
            }),
        }
    }

    fn apply_auth(
        &self,
        req: reqwest::blocking::RequestBuilder,
        key: &str,
    ) -> reqwest::blocking::RequestBuilder {
        match self {
            Adapter::OpenAiCompat => req.bearer_auth(key),
            Adapter::Anthropic => req
                .header("x-api-key", key)
                .header("anthropic-version", "2023-06-01"),
        }
    }

    fn extract(&self, body: &Value) -> (Option<String>, Option<u64>, Option<u64>) {
        match self {
            Adapter::OpenAiCompat => (
                body.pointer("/choices/0/message/content")
                    .and_then(Value::as_str)
                    .map(str::to_string),
                body.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
                body.pointer("/usage/completion_tokens").and_then(Value::as_u64),
            ),
            Adapter::Anthropic => (
                body.pointer("/content/0/text")
                    .and_then(Value::as_str)
                    .map(str::to_string),
                body.pointer("/usage/input_tokens").and_then(Value::as_u64),
                body.pointer("/usage/output_tokens").and_then(Value::as_u64),
            ),
        }
    }
}

/// Sends a single chat completion request with the prompt as the user
/// message, retrying transient failures (connect errors, timeouts, 429,
/// 5xx) with exponential backoff. Auth rejections and other 4xx responses
/// fail immediately.
pub fn call_llm(prompt: &str, config: &EndpointConfig) -> Result<LlmResponse, ElicitError> {
    let key = std::env::var(&config.api_key_env)
        .map_err(|_| ElicitError::MissingApiKey(config.api_key_env.clone()))?;
    let adapter = Adapter::for_provider(&config.provider);
    let url = adapter.url(&config.base_url);
    let body = adapter.body(config, prompt);
    let attempts = config.attempts.max(1);

    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(config.timeout_secs))
        .build()
        .map_err(|e| ElicitError::Transport {
            attempts: 0,
            detail: e.to_string(),
        })?;

    let mut last_detail = String::new();
    for attempt in 0..attempts {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(250 << (attempt - 1)));
        }
        let req = adapter.apply_auth(client.post(&url), &key).json(&body);
        match req.send() {
            Err(e) => {
                last_detail = e.to_string();
            }
            Ok(resp) => {
                let status = resp.status();
                let text = resp.text().unwrap_or_default();
                if status.as_u16() == 401 || status.as_u16() == 403 {
                    return Err(ElicitError::Auth {
                        status: status.as_u16(),
                        detail: truncate(&text),
                    });
                }
                if status.is_server_error() || status.as_u16() == 429 {
                    last_detail = format!("HTTP {}: {}", status.as_u16(), truncate(&text));
                    continue;
                }
                if !status.is_success() {
                    return Err(ElicitError::HttpStatus {
                        status: status.as_u16(),
                        detail: truncate(&text),
                    });
                }
                if text.trim().is_empty() {
                    return Err(ElicitError::EmptyResponse);
                }
                let parsed: Value =
                    serde_json::from_str(&text).map_err(|e| ElicitError::HttpStatus {
                        status: status.as_u16(),
                        detail: format!("unparseable response body: {e}"),
                    })?;
                let (content, prompt_tokens, completion_tokens) = adapter.extract(&parsed);
                let text = content.ok_or(ElicitError::EmptyResponse)?;
                if text.trim().is_empty() {
                    return Err(ElicitError::EmptyResponse);
                }
                return Ok(LlmResponse {
                    text,
                    prompt_tokens,
                    completion_tokens,
                });
            }
        }
    }
    Err(ElicitError::Transport {
        attempts,
        detail: last_detail,
    })
}

fn truncate(text: &str) -> String {
    const LIMIT: usize = 400;
    if text.len() <= LIMIT {
        return text.to_string();
    }
    let end = (0..=LIMIT).rev().find(|&i| text.is_char_boundary(i)).unwrap_or(0);
    format!("{}...", &text[..end])
}

//! OpenAI-compatible HTTP providers (chat completions and embeddings).

use std::env;
use std::sync::OnceLock;
use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    ChatProvider, ChatRequest, EmbeddingProvider, EmbeddingVector, LlmError,
    DEFAULT_EMBEDDING_MODEL,
};

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 2,
            base_backoff: Duration::from_millis(250),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
        }
    }

    /// `RECAGENT_LLM_BASE_URL`, `RECAGENT_LLM_MODEL`, `RECAGENT_LLM_API_KEY`.
    pub fn chat_from_env() -> Result<Self, LlmError> {
        Self::from_env("RECAGENT_LLM", None)
    }

    /// `RECAGENT_EMBED_BASE_URL` (falls back to the chat base URL),
    /// `RECAGENT_EMBED_MODEL` (default `text-embedding-3-small`),
    /// `RECAGENT_EMBED_API_KEY` (falls back to the chat key).
    pub fn embedding_from_env() -> Result<Self, LlmError> {
        let mut cfg = Self::from_env("RECAGENT_EMBED", Some(DEFAULT_EMBEDDING_MODEL))
            .or_else(|_| Self::from_env("RECAGENT_LLM", Some(DEFAULT_EMBEDDING_MODEL)))?;
        if let Ok(m) = env::var("RECAGENT_EMBED_MODEL") {
            cfg.model = m;
        } else {
            cfg.model = DEFAULT_EMBEDDING_MODEL.to_string();
        }
        if cfg.api_key.is_none() {
            cfg.api_key = env::var("RECAGENT_LLM_API_KEY").ok();
        }
        Ok(cfg)
    }

    fn from_env(prefix: &str, default_model: Option<&str>) -> Result<Self, LlmError> {
        let base = env::var(format!("{prefix}_BASE_URL"))
            .map_err(|_| LlmError::ProviderUnavailable(format!("{prefix}_BASE_URL is not set")))?;
        let model = env::var(format!("{prefix}_MODEL"))
            .ok()
            .or_else(|| default_model.map(str::to_string))
            .ok_or_else(|| LlmError::ProviderUnavailable(format!("{prefix}_MODEL is not set")))?;
        let mut cfg = HttpConfig::new(base, model);
        cfg.api_key = env::var(format!("{prefix}_API_KEY")).ok();
        Ok(cfg)
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path)
    }
}

struct Transport {
    client: Client,
    config: HttpConfig,
}

impl Transport {
    fn new(config: HttpConfig) -> Result<Self, LlmError> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::ProviderUnavailable(format!("http client: {e}")))?;
        Ok(Transport { client, config })
    }

    fn retryable(status: StatusCode) -> bool {
        status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error()
    }

    /// POSTs `body`, retrying connection failures, 429 and 5xx with
    /// exponential backoff.
    fn post(&self, path: &str, body: &Value) -> Result<Value, LlmError> {
        let url = self.config.url(path);
        let attempts = self.config.retry.max_retries + 1;
        let mut last_err = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.config.retry.base_backoff * 2u32.pow(attempt - 1));
            }
            let mut req = self.client.post(&url).json(body);
            if let Some(key) = &self.config.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    return resp
                        .json::<Value>()
                        .map_err(|e| LlmError::ProviderUnavailable(format!("bad body: {e}")))
                }
                Ok(resp) => {
                    let status = resp.status();
                    last_err = format!("{url} returned {status}");
                    if !Self::retryable(status) {
                        break;
                    }
                    log::warn!("{last_err}; attempt {}/{attempts}", attempt + 1);
                }
                Err(e) => {
                    last_err = format!("{url}: {e}");
                    log::warn!("{last_err}; attempt {}/{attempts}", attempt + 1);
                }
            }
        }
        Err(LlmError::ProviderUnavailable(last_err))
    }
}

pub struct HttpProvider {
    transport: Transport,
}

impl HttpProvider {
    pub fn new(config: HttpConfig) -> Result<Self, LlmError> {
        Ok(HttpProvider {
            transport: Transport::new(config)?,
        })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

impl ChatProvider for HttpProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        request.validate()?;
        let body = json!({
            "model": self.transport.config.model,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "temperature": request.temperature,
            "stream": false,
        });
        let value = self.transport.post("chat/completions", &body)?;
        let resp: ChatResponse = serde_json::from_value(value)
            .map_err(|e| LlmError::ProviderUnavailable(format!("unexpected chat response: {e}")))?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::ProviderUnavailable("chat response without content".into()))
    }
}

pub struct HttpEmbedder {
    transport: Transport,
    dimension: OnceLock<usize>,
}

impl HttpEmbedder {
    pub fn new(config: HttpConfig) -> Result<Self, LlmError> {
        Ok(HttpEmbedder {
            transport: Transport::new(config)?,
            dimension: OnceLock::new(),
        })
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl EmbeddingProvider for HttpEmbedder {
    /// Zero until the first successful call fixes it.
    fn dimension(&self) -> usize {
        self.dimension.get().copied().unwrap_or(0)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        if text.trim().is_empty() {
            return Err(LlmError::InvalidRequest("cannot embed empty text".into()));
        }
        let body = json!({"model": self.transport.config.model, "input": text});
        let value = self.transport.post("embeddings", &body)?;
        let resp: EmbeddingResponse = serde_json::from_value(value).map_err(|e| {
            LlmError::ProviderUnavailable(format!("unexpected embedding response: {e}"))
        })?;
        let values = resp
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .filter(|v| !v.is_empty() && v.iter().all(|x| x.is_finite()))
            .ok_or_else(|| LlmError::ProviderUnavailable("empty or non-finite embedding".into()))?;
        let dim = *self.dimension.get_or_init(|| values.len());
        if dim != values.len() {
            return Err(LlmError::ProviderUnavailable(format!(
                "embedding dimension changed from {dim} to {}",
                values.len()
            )));
        }
        Ok(EmbeddingVector::new(values))
    }
}

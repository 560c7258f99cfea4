//! Chat-completion and embedding access.
//!
//! Two provider families sit behind the [`ChatProvider`] and
//! [`EmbeddingProvider`] traits: scripted ones for deterministic runs and
//! HTTP ones for OpenAI-compatible endpoints.

mod embed;
mod http;
mod parse;
mod scripted;

use std::fmt;
use std::io::Write;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use embed::HashEmbedder;
pub use http::{HttpConfig, HttpEmbedder, HttpProvider, RetryPolicy};
pub use parse::{
    complete_with_repair, extract_records, parse_structured, repair_instruction, ParseOutcome,
    ParsedRecord, RepairFailure, SchemaTag, MAX_ATTEMPTS,
};
pub use scripted::{RecordingProvider, ScriptEntry, ScriptedProvider};

pub const DEFAULT_EMBEDDING_MODEL: &str = "text-embedding-3-small";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("no scripted response for role {role} digest {digest}")]
    MissingScript { role: RoleTag, digest: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed {shape} output after {attempts} attempts: {reason}")]
    MalformedOutput {
        shape: SchemaTag,
        attempts: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleTag {
    Planner,
    Decision,
    Reflection,
    Interaction,
    Recall,
}

impl RoleTag {
    pub fn as_str(self) -> &'static str {
        match self {
            RoleTag::Planner => "planner",
            RoleTag::Decision => "decision",
            RoleTag::Reflection => "reflection",
            RoleTag::Interaction => "interaction",
            RoleTag::Recall => "recall",
        }
    }
}

impl fmt::Display for RoleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub role_tag: RoleTag,
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn new(
        role_tag: RoleTag,
        system_prompt: impl Into<String>,
        user_prompt: impl Into<String>,
    ) -> Self {
        ChatRequest {
            role_tag,
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            temperature: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err(LlmError::InvalidRequest("prompts must be non-empty".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} < 0",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Hex SHA-256 over both prompts, truncated to 16 bytes. Scripted
    /// responses are keyed by `(role_tag, digest)`.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.system_prompt.as_bytes());
        h.update([0u8]);
        h.update(self.user_prompt.as_bytes());
        let out = h.finalize();
        out[..16].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub dimension: usize,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        let dimension = values.len();
        EmbeddingVector { values, dimension }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine similarity; zero when either side has zero norm.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    if a.dimension != b.dimension {
        return 0.0;
    }
    if a.values == b.values && a.norm() > 0.0 {
        return 1.0;
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;
}

pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError>;
}

impl<T: ChatProvider + ?Sized> ChatProvider for &T {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }
}

impl<T: ChatProvider + ?Sized> ChatProvider for std::sync::Arc<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }
}

impl<T: ChatProvider + ?Sized> ChatProvider for Box<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for &T {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        (**self).embed(text)
    }
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for std::sync::Arc<T> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        (**self).embed(text)
    }
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<T> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        (**self).embed(text)
    }
}

/// Chat provider backed by a closure. Handy for policies and test doubles.
pub struct FnProvider<F>(pub F);

impl<F> ChatProvider for FnProvider<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (self.0)(request)
    }
}

/// Writes every assembled prompt to a sink before delegating.
pub struct PromptDump<P, W> {
    inner: P,
    sink: Mutex<W>,
}

impl<P, W: Write> PromptDump<P, W> {
    pub fn new(inner: P, sink: W) -> Self {
        PromptDump {
            inner,
            sink: Mutex::new(sink),
        }
    }
}

impl<P: ChatProvider, W: Write + Send> ChatProvider for PromptDump<P, W> {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        {
            let mut w = self.sink.lock().unwrap_or_else(|e| e.into_inner());
            let _ = writeln!(
                w,
                "===== {} [{}] =====\n--- system ---\n{}\n--- user ---\n{}\n",
                request.role_tag,
                request.digest(),
                request.system_prompt,
                request.user_prompt
            );
        }
        self.inner.complete(request)
    }
}

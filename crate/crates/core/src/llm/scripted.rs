//! Deterministic chat provider driven by a response script.
//!
//! A script is a JSON-lines file; each line maps `(role, digest)` to a
//! response. `note` is free text for humans reading the file.
//!
//! ```text
//! {"role":"decision","digest":"3f0c…","response":"{\"action_type\":\"click\",…}","note":"Screen: home"}
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatProvider, ChatRequest, LlmError, RoleTag};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub role: RoleTag,
    pub digest: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedProvider {
    entries: BTreeMap<(RoleTag, String), String>,
}

impl ScriptedProvider {
    pub fn new(entries: impl IntoIterator<Item = ScriptEntry>) -> Self {
        ScriptedProvider {
            entries: entries
                .into_iter()
                .map(|e| ((e.role, e.digest), e.response))
                .collect(),
        }
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LlmError> {
        let entries = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str::<ScriptEntry>(l)
                    .map_err(|e| LlmError::InvalidRequest(format!("script line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ScriptedProvider::new(entries))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| {
            LlmError::ProviderUnavailable(format!("cannot read script {}: {e}", path.display()))
        })?;
        ScriptedProvider::from_jsonl(&text)
    }

    pub fn insert(&mut self, request: &ChatRequest, response: impl Into<String>) {
        self.entries
            .insert((request.role_tag, request.digest()), response.into());
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl ChatProvider for ScriptedProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        request.validate()?;
        let digest = request.digest();
        self.entries
            .get(&(request.role_tag, digest.clone()))
            .cloned()
            .ok_or(LlmError::MissingScript {
                role: request.role_tag,
                digest,
            })
    }
}

/// Wraps a provider and records every exchange as script entries.
pub struct RecordingProvider<P> {
    inner: P,
    recorded: Mutex<BTreeMap<(RoleTag, String), ScriptEntry>>,
}

impl<P: ChatProvider> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        RecordingProvider {
            inner,
            recorded: Mutex::new(BTreeMap::new()),
        }
    }

    /// Recorded entries, ordered by `(role, digest)`.
    pub fn entries(&self) -> Vec<ScriptEntry> {
        self.recorded
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .cloned()
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        self.entries()
            .iter()
            .map(|e| serde_json::to_string(e).expect("serializable") + "\n")
            .collect()
    }
}

impl<P: ChatProvider> ChatProvider for RecordingProvider<P> {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let response = self.inner.complete(request)?;
        let note = request
            .user_prompt
            .lines()
            .find(|l| l.starts_with("Screen:"))
            .unwrap_or_default()
            .to_string();
        let entry = ScriptEntry {
            role: request.role_tag,
            digest: request.digest(),
            response: response.clone(),
            note,
        };
        self.recorded
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert((entry.role, entry.digest.clone()), entry);
        Ok(response)
    }
}

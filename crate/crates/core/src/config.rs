//! Flat key-value config file and provider construction.
//!
//! ```toml
//! provider = "http"
//! max_steps = 30
//! max_candidates = 10
//! llm_base_url = "http://localhost:8000/v1"
//! llm_model = "gpt-4o"
//! ```
//!
//! API keys are read from the environment only.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::llm::{
    ChatProvider, EmbeddingProvider, HashEmbedder, HttpConfig, HttpEmbedder, HttpProvider,
    LlmError, ScriptedProvider,
};
use crate::orchestrator::SessionConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Scripted,
    Http,
}

impl FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scripted" => Ok(ProviderKind::Scripted),
            "http" => Ok(ProviderKind::Http),
            other => Err(format!(
                "unknown provider {other:?}; expected scripted or http"
            )),
        }
    }
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProviderKind::Scripted => "scripted",
            ProviderKind::Http => "http",
        })
    }
}

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("config: {0}")]
    Invalid(String),
}

/// Every key is optional; absent keys keep their defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub provider: Option<ProviderKind>,
    pub max_steps: Option<u32>,
    pub max_retrospection_attempts: Option<u32>,
    pub feedback_timeout_seconds: Option<u64>,
    pub use_crm: Option<bool>,
    pub max_candidates: Option<usize>,
    pub semantic_top_k: Option<usize>,
    pub semantic_floor: Option<f64>,
    pub fuzzy_threshold: Option<f64>,
    pub llm_confidence: Option<f64>,
    pub llm_max_ids: Option<usize>,
    pub keyword_pathway: Option<bool>,
    pub semantic_pathway: Option<bool>,
    pub llm_pathway: Option<bool>,
    pub temperature: Option<f64>,
    pub llm_base_url: Option<String>,
    pub llm_model: Option<String>,
    pub llm_timeout_seconds: Option<u64>,
    pub llm_max_retries: Option<u32>,
    pub embed_base_url: Option<String>,
    pub embed_model: Option<String>,
    /// Use the local hash embedding even with the http chat provider.
    pub embed_local: Option<bool>,
    pub listen: Option<String>,
}

impl FileConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigFileError> {
        toml::from_str(text).map_err(|e| ConfigFileError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigFileError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigFileError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Overlays the file values on `base` and validates the result.
    pub fn session_config(&self, base: SessionConfig) -> Result<SessionConfig, ConfigFileError> {
        let mut c = base;
        macro_rules! set {
            ($($src:ident => $($dst:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$src.clone() { c.$($dst).+ = v; })*
            };
        }
        set!(
            max_steps => max_steps,
            max_retrospection_attempts => max_retrospection_attempts,
            feedback_timeout_seconds => feedback_timeout_secs,
            use_crm => use_crm,
            max_candidates => crm.max_candidates,
            semantic_top_k => crm.semantic_top_k,
            semantic_floor => crm.semantic_floor,
            fuzzy_threshold => crm.fuzzy_threshold,
            llm_confidence => crm.llm_confidence,
            llm_max_ids => crm.llm_max_ids,
            keyword_pathway => crm.pathways.keyword,
            semantic_pathway => crm.pathways.semantic,
            llm_pathway => crm.pathways.llm,
            temperature => temperature,
        );
        c.validate()
            .map_err(|e| ConfigFileError::Invalid(e.to_string()))?;
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ConfigFileError::Invalid(format!(
                    "{name} must lie in [0, 1]"
                )))
            }
        };
        unit("semantic_floor", c.crm.semantic_floor)?;
        unit("fuzzy_threshold", c.crm.fuzzy_threshold)?;
        unit("llm_confidence", c.crm.llm_confidence)?;
        if c.temperature.is_nan() || c.temperature < 0.0 {
            return Err(ConfigFileError::Invalid("temperature must be >= 0".into()));
        }
        Ok(c)
    }

    fn chat_http(&self) -> Result<HttpConfig, LlmError> {
        let mut cfg = match (&self.llm_base_url, &self.llm_model) {
            (Some(url), Some(model)) => {
                let mut c = HttpConfig::new(url.clone(), model.clone());
                c.api_key = std::env::var("RECAGENT_LLM_API_KEY").ok();
                c
            }
            _ => {
                let mut c = HttpConfig::chat_from_env()?;
                if let Some(url) = &self.llm_base_url {
                    c.base_url = url.clone();
                }
                if let Some(m) = &self.llm_model {
                    c.model = m.clone();
                }
                c
            }
        };
        if let Some(t) = self.llm_timeout_seconds {
            cfg.timeout = std::time::Duration::from_secs(t);
        }
        if let Some(r) = self.llm_max_retries {
            cfg.retry.max_retries = r;
        }
        Ok(cfg)
    }

    fn embed_http(&self, chat: &HttpConfig) -> HttpConfig {
        let mut cfg = HttpConfig::embedding_from_env().unwrap_or_else(|_| {
            let mut c = chat.clone();
            c.model = crate::llm::DEFAULT_EMBEDDING_MODEL.into();
            c
        });
        if let Some(url) = &self.embed_base_url {
            cfg.base_url = url.clone();
        }
        if let Some(m) = &self.embed_model {
            cfg.model = m.clone();
        }
        cfg.retry = chat.retry.clone();
        cfg.timeout = chat.timeout;
        cfg
    }
}

/// A chat and an embedding provider, shareable across threads.
#[derive(Clone)]
pub struct Providers {
    pub chat: Arc<dyn ChatProvider>,
    pub embedder: Arc<dyn EmbeddingProvider>,
}

impl Providers {
    pub fn scripted(script: &Path) -> Result<Self, LlmError> {
        Ok(Providers {
            chat: Arc::new(ScriptedProvider::load(script)?),
            embedder: Arc::new(HashEmbedder::default()),
        })
    }

    pub fn http(file: &FileConfig) -> Result<Self, LlmError> {
        let chat_cfg = file.chat_http()?;
        let embedder: Arc<dyn EmbeddingProvider> = if file.embed_local.unwrap_or(false) {
            Arc::new(HashEmbedder::default())
        } else {
            Arc::new(HttpEmbedder::new(file.embed_http(&chat_cfg))?)
        };
        Ok(Providers {
            chat: Arc::new(HttpProvider::new(chat_cfg)?),
            embedder,
        })
    }

    /// Scripted providers read `script`; http providers ignore it.
    pub fn build(kind: ProviderKind, script: &Path, file: &FileConfig) -> Result<Self, LlmError> {
        match kind {
            ProviderKind::Scripted => Self::scripted(script),
            ProviderKind::Http => Self::http(file),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlays_only_present_keys() {
        let f = FileConfig::parse(
            "max_steps = 12\nmax_candidates = 4\nllm_pathway = false\n",
            "t",
        )
        .unwrap();
        let c = f.session_config(SessionConfig::default()).unwrap();
        assert_eq!(c.max_steps, 12);
        assert_eq!(c.crm.max_candidates, 4);
        assert!(!c.crm.pathways.llm);
        assert_eq!(c.max_retrospection_attempts, 3);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(FileConfig::parse("max_stepz = 3", "t").is_err());
        let f = FileConfig::parse("max_steps = 0", "t").unwrap();
        assert!(f.session_config(SessionConfig::default()).is_err());
        let f = FileConfig::parse("semantic_floor = 1.5", "t").unwrap();
        assert!(f.session_config(SessionConfig::default()).is_err());
    }

    #[test]
    fn provider_kind_parses() {
        let f = FileConfig::parse("provider = \"http\"", "t").unwrap();
        assert_eq!(f.provider, Some(ProviderKind::Http));
        assert_eq!(
            "scripted".parse::<ProviderKind>(),
            Ok(ProviderKind::Scripted)
        );
        assert!("gpt".parse::<ProviderKind>().is_err());
    }
}

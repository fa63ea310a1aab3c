//! Completion providers: a chat-completion HTTP endpoint, a fixture map, and
//! an offline stand-in that answers refinement and extraction prompts
//! deterministically.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::prompts::{CLASSIFY, EXTRACT_KG, REFINE};
use super::{mock_extract, CompletionRequest, LlmConfig};
use crate::corpus::read_file;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderError {
    /// Worth retrying: timeouts, connection failures, 429 and 5xx.
    Transient(String),
    Credential(String),
    Protocol(String),
}

pub trait Provider: Send + Sync {
    fn call(&self, request: &CompletionRequest) -> std::result::Result<String, ProviderError>;
}

impl<F> Provider for F
where
    F: Fn(&CompletionRequest) -> std::result::Result<String, ProviderError> + Send + Sync,
{
    fn call(&self, request: &CompletionRequest) -> std::result::Result<String, ProviderError> {
        self(request)
    }
}

/// Chat-completion style endpoint taking `(model, temperature, one message)`.
pub struct HttpProvider {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: String,
    role: String,
}

impl HttpProvider {
    /// Reads the credential from the environment variable named in the config.
    pub fn from_config(config: &LlmConfig) -> Result<Self> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            Error::Credential(format!(
                "environment variable {} is not set",
                config.api_key_env
            ))
        })?;
        Self::new(config, api_key)
    }

    pub fn new(config: &LlmConfig, api_key: String) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Transport(format!("cannot build HTTP client: {e}")))?;
        Ok(Self {
            client,
            endpoint: config.endpoint.clone(),
            api_key,
            role: config.role.clone(),
        })
    }
}

impl Provider for HttpProvider {
    fn call(&self, request: &CompletionRequest) -> std::result::Result<String, ProviderError> {
        let body = json!({
            "model": request.model_name,
            "temperature": request.temperature,
            "messages": [{"role": self.role, "content": request.prompt}],
        });
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        match status.as_u16() {
            200..=299 => {}
            401 | 403 => return Err(ProviderError::Credential(format!("HTTP {status}: {text}"))),
            408 | 429 | 500..=599 => {
                return Err(ProviderError::Transient(format!("HTTP {status}")))
            }
            _ => return Err(ProviderError::Protocol(format!("HTTP {status}: {text}"))),
        }
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Protocol(format!("response is not JSON: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| {
                ProviderError::Protocol("response has no choices[0].message.content".into())
            })
    }
}

#[derive(Deserialize)]
struct FixtureLine {
    key: Option<String>,
    doc_id: Option<String>,
    response: String,
}

/// Responses looked up by cache key, then by document id.
#[derive(Default)]
pub struct FixtureProvider {
    by_key: HashMap<String, String>,
    by_doc: HashMap<String, String>,
    fallback: Option<Box<dyn Provider>>,
}

impl FixtureProvider {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads a JSONL file of `{"key"|"doc_id": ..., "response": ...}` lines.
    pub fn load(path: &Path) -> Result<Self> {
        let mut fixtures = Self::new();
        for (i, line) in read_file(path)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: FixtureLine = serde_json::from_str(line)
                .map_err(|e| Error::Format(format!("{}: line {}: {e}", path.display(), i + 1)))?;
            match (f.key, f.doc_id) {
                (Some(k), _) => {
                    fixtures.by_key.insert(k, f.response);
                }
                (None, Some(d)) => {
                    fixtures.by_doc.insert(d, f.response);
                }
                (None, None) => {
                    return Err(Error::Format(format!(
                        "{}: line {}: fixture needs a key or a doc_id",
                        path.display(),
                        i + 1
                    )))
                }
            }
        }
        Ok(fixtures)
    }

    pub fn with_key(mut self, key: impl Into<String>, response: impl Into<String>) -> Self {
        self.by_key.insert(key.into(), response.into());
        self
    }

    pub fn with_doc(mut self, doc_id: impl Into<String>, response: impl Into<String>) -> Self {
        self.by_doc.insert(doc_id.into(), response.into());
        self
    }

    /// Provider consulted when no fixture matches.
    pub fn with_fallback(mut self, fallback: Box<dyn Provider>) -> Self {
        self.fallback = Some(fallback);
        self
    }
}

impl Provider for FixtureProvider {
    fn call(&self, request: &CompletionRequest) -> std::result::Result<String, ProviderError> {
        if let Some(r) = self.by_key.get(&request.cache_key()) {
            return Ok(r.clone());
        }
        if let Some(r) = request.doc_id.as_ref().and_then(|d| self.by_doc.get(d)) {
            return Ok(r.clone());
        }
        match &self.fallback {
            Some(p) => p.call(request),
            None => Err(ProviderError::Protocol(format!(
                "no fixture for request (doc {:?})",
                request.doc_id
            ))),
        }
    }
}

/// Offline provider: refinement returns the input text unchanged, extraction
/// answers with token trigrams, classification answers "None".
pub struct MockProvider {
    pub stride: usize,
}

impl Default for MockProvider {
    fn default() -> Self {
        Self { stride: 1 }
    }
}

impl Provider for MockProvider {
    fn call(&self, request: &CompletionRequest) -> std::result::Result<String, ProviderError> {
        if let Some(text) = REFINE.extract_text(&request.prompt) {
            return Ok(text.to_string());
        }
        if let Some(text) = EXTRACT_KG.extract_text(&request.prompt) {
            return mock_extract(text, self.stride)
                .map_err(|e| ProviderError::Protocol(e.to_string()));
        }
        if CLASSIFY.extract_text(&request.prompt).is_some() {
            return Ok("None".into());
        }
        Err(ProviderError::Protocol(
            "mock provider does not recognize the prompt".into(),
        ))
    }
}

//! Prompt rendering and a provider-agnostic completion client with a
//! persistent cache, retries and rate limiting.

mod cache;
mod prompts;
mod provider;
mod ratelimit;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::tokenize;
use crate::tripleparse::Triple;

pub use cache::{CacheRecord, ResponseCache};
pub use prompts::{
    label_list, load_shot_bank, render_classify_prompt, render_extract_prompt,
    render_refine_prompt, PromptKind, PromptTemplate, ShotExample, CLASSIFY, EXTRACT_KG, REFINE,
    SUPPORTED_SHOTS,
};
pub use provider::{FixtureProvider, HttpProvider, MockProvider, Provider, ProviderError};
pub use ratelimit::RateLimiter;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_name: String,
    pub temperature: f64,
    pub prompt: String,
    /// Routing hint for fixture providers; not part of the cache key.
    #[serde(skip)]
    pub doc_id: Option<String>,
}

impl CompletionRequest {
    pub fn new(model_name: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            model_name: model_name.into(),
            temperature: 0.0,
            prompt: prompt.into(),
            doc_id: None,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn for_doc(mut self, doc_id: impl Into<String>) -> Self {
        self.doc_id = Some(doc_id.into());
        self
    }

    /// Hex SHA-256 of the JSON array `[model_name, temperature, prompt]`.
    pub fn cache_key(&self) -> String {
        let canonical = serde_json::to_string(&(&self.model_name, self.temperature, &self.prompt))
            .expect("request fields serialize");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    fn validate(&self) -> Result<()> {
        if self.prompt.is_empty() {
            return Err(Error::Argument("completion prompt is empty".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::Argument(format!(
                "invalid temperature {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Provider and client settings, read from the `[llm]` table of a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    /// Message role used for the single prompt message.
    pub role: String,
    pub requests_per_minute: f64,
    pub burst: u32,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_cap_ms: u64,
    pub timeout_secs: u64,
    pub workers: usize,
    pub cache_path: Option<PathBuf>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            temperature: 0.0,
            api_key_env: "OPENAI_API_KEY".into(),
            role: "user".into(),
            requests_per_minute: 60.0,
            burst: 1,
            max_retries: 5,
            backoff_base_ms: 500,
            backoff_cap_ms: 30_000,
            timeout_secs: 60,
            workers: 4,
            cache_path: None,
        }
    }
}

impl LlmConfig {
    pub fn request(&self, prompt: String) -> CompletionRequest {
        CompletionRequest::new(self.model.clone(), prompt).with_temperature(self.temperature)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base: Duration,
    pub cap: Duration,
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            base: Duration::ZERO,
            cap: Duration::ZERO,
        }
    }

    /// Delay before retry number `attempt` (0-based): `base · 2^attempt`, capped.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.min(31)).unwrap_or(u32::MAX);
        self.base.saturating_mul(factor).min(self.cap)
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 5,
            base: Duration::from_millis(500),
            cap: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientStats {
    pub provider_calls: usize,
    pub cache_hits: usize,
    pub retries: usize,
    pub failures: usize,
}

#[derive(Default)]
struct Counters {
    provider_calls: AtomicUsize,
    cache_hits: AtomicUsize,
    retries: AtomicUsize,
    failures: AtomicUsize,
}

/// Completion client: cache first, then the provider with retries.
/// Concurrent identical requests result in a single provider call.
pub struct LlmClient {
    provider: Box<dyn Provider>,
    cache: ResponseCache,
    retry: RetryPolicy,
    limiter: Option<RateLimiter>,
    in_flight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    counters: Counters,
}

impl LlmClient {
    pub fn new(provider: Box<dyn Provider>, cache: ResponseCache) -> Self {
        Self {
            provider,
            cache,
            retry: RetryPolicy::default(),
            limiter: None,
            in_flight: Mutex::new(HashMap::new()),
            counters: Counters::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, limiter: RateLimiter) -> Self {
        self.limiter = Some(limiter);
        self
    }

    /// HTTP client configured from `config`: cache file, retry policy and rate limit.
    pub fn from_config(config: &LlmConfig) -> Result<Self> {
        let provider = HttpProvider::from_config(config)?;
        let cache = match &config.cache_path {
            Some(p) => ResponseCache::open(p)?,
            None => ResponseCache::in_memory(),
        };
        Ok(Self::new(Box::new(provider), cache)
            .with_retry(RetryPolicy {
                max_retries: config.max_retries,
                base: Duration::from_millis(config.backoff_base_ms),
                cap: Duration::from_millis(config.backoff_cap_ms),
            })
            .with_rate_limit(RateLimiter::new(config.requests_per_minute, config.burst)))
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn stats(&self) -> ClientStats {
        ClientStats {
            provider_calls: self.counters.provider_calls.load(Ordering::SeqCst),
            cache_hits: self.counters.cache_hits.load(Ordering::SeqCst),
            retries: self.counters.retries.load(Ordering::SeqCst),
            failures: self.counters.failures.load(Ordering::SeqCst),
        }
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<String> {
        request.validate()?;
        let key = request.cache_key();
        if let Some(hit) = self.cache.get(&key) {
            self.counters.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(hit);
        }

        let guard = {
            let mut map = self.in_flight.lock().expect("in-flight lock");
            Arc::clone(map.entry(key.clone()).or_default())
        };
        let result = {
            let _held = guard.lock().expect("per-key lock");
            if let Some(hit) = self.cache.get(&key) {
                self.counters.cache_hits.fetch_add(1, Ordering::SeqCst);
                Ok(hit)
            } else {
                self.call_with_retries(request)
                    .and_then(|text| self.cache.insert(&key, &text).map(|_| text))
            }
        };
        {
            let mut map = self.in_flight.lock().expect("in-flight lock");
            if map
                .get(&key)
                .is_some_and(|g| Arc::ptr_eq(g, &guard) && Arc::strong_count(g) == 2)
            {
                map.remove(&key);
            }
        }
        if result.is_err() {
            self.counters.failures.fetch_add(1, Ordering::SeqCst);
        }
        result
    }

    fn call_with_retries(&self, request: &CompletionRequest) -> Result<String> {
        let mut attempt = 0;
        loop {
            if let Some(l) = &self.limiter {
                l.acquire();
            }
            self.counters.provider_calls.fetch_add(1, Ordering::SeqCst);
            match self.provider.call(request) {
                Ok(text) => return Ok(text),
                Err(ProviderError::Credential(m)) => return Err(Error::Credential(m)),
                Err(ProviderError::Protocol(m)) => return Err(Error::Protocol(m)),
                Err(ProviderError::Transient(m)) => {
                    if attempt >= self.retry.max_retries {
                        return Err(Error::Transport(format!(
                            "giving up after {} attempts: {m}",
                            attempt + 1
                        )));
                    }
                    let wait = self.retry.backoff(attempt);
                    warn!("transient provider failure ({m}); retrying in {wait:?}");
                    self.counters.retries.fetch_add(1, Ordering::SeqCst);
                    thread::sleep(wait);
                    attempt += 1;
                }
            }
        }
    }

    /// Runs requests on up to `workers` threads. Results keep input order.
    pub fn complete_batch(
        &self,
        requests: &[CompletionRequest],
        workers: usize,
    ) -> Vec<Result<String>> {
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<String>>>> =
            requests.iter().map(|_| Mutex::new(None)).collect();
        thread::scope(|s| {
            for _ in 0..workers.clamp(1, requests.len().max(1)) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= requests.len() {
                        break;
                    }
                    let r = self.complete(&requests[i]);
                    debug!("request {i} done: ok={}", r.is_ok());
                    *slots[i].lock().expect("slot lock") = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| {
                m.into_inner()
                    .expect("slot lock")
                    .expect("every slot filled")
            })
            .collect()
    }
}

/// Offline extraction: consecutive token trigrams `(t_i, t_i+1, t_i+2)` for
/// `i = 0, stride, 2·stride, …`, one per line in the triplet format. Fewer than
/// three tokens yields `None`.
pub fn mock_extract(refined: &str, stride: usize) -> Result<String> {
    if refined.is_empty() {
        return Err(Error::Argument("mock extraction of empty text".into()));
    }
    if stride == 0 {
        return Err(Error::Argument("stride must be positive".into()));
    }
    let tokens = tokenize(refined);
    if tokens.len() < 3 {
        return Ok("None".into());
    }
    let lines: Vec<String> = (0..=tokens.len() - 3)
        .step_by(stride)
        .map(|i| {
            Triple::new(&tokens[i], &tokens[i + 1], &tokens[i + 2])
                .expect("tokens are non-empty single words")
                .to_line()
        })
        .collect();
    Ok(lines.join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tripleparse::parse_triples;
    use proptest::prelude::*;
    use std::sync::atomic::AtomicUsize;

    fn counting(response: &'static str) -> (Arc<AtomicUsize>, Box<dyn Provider>) {
        let calls = Arc::new(AtomicUsize::new(0));
        let c = Arc::clone(&calls);
        let p = move |_: &CompletionRequest| {
            c.fetch_add(1, Ordering::SeqCst);
            thread::sleep(Duration::from_millis(5));
            Ok::<_, ProviderError>(response.to_string())
        };
        (calls, Box::new(p))
    }

    #[test]
    fn cache_key_depends_on_each_field() {
        let base = CompletionRequest::new("m", "p");
        let k = base.cache_key();
        assert_eq!(
            k,
            CompletionRequest::new("m", "p")
                .for_doc("ignored")
                .cache_key()
        );
        assert_ne!(k, CompletionRequest::new("m2", "p").cache_key());
        assert_ne!(k, CompletionRequest::new("m", "p2").cache_key());
        assert_ne!(k, base.clone().with_temperature(0.5).cache_key());
        // Field boundaries are unambiguous.
        assert_ne!(
            CompletionRequest::new("ab", "c").cache_key(),
            CompletionRequest::new("a", "bc").cache_key()
        );
    }

    #[test]
    fn cached_request_makes_no_calls() {
        let (calls, p) = counting("fresh");
        let cache = ResponseCache::in_memory();
        let req = CompletionRequest::new("m", "hello");
        cache.insert(&req.cache_key(), "cached").unwrap();
        let client = LlmClient::new(p, cache);
        assert_eq!(client.complete(&req).unwrap(), "cached");
        assert_eq!(calls.load(Ordering::SeqCst), 0);
        assert_eq!(client.stats().cache_hits, 1);
    }

    #[test]
    fn identical_requests_cold_cache_call_once() {
        let (calls, p) = counting("r");
        let client = LlmClient::new(p, ResponseCache::in_memory());
        let req = CompletionRequest::new("m", "same");
        assert_eq!(client.complete(&req).unwrap(), "r");
        assert_eq!(client.complete(&req).unwrap(), "r");
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn concurrent_identical_requests_call_once() {
        let (calls, p) = counting("r");
        let client = LlmClient::new(p, ResponseCache::in_memory());
        let reqs = vec![CompletionRequest::new("m", "same"); 16];
        let out = client.complete_batch(&reqs, 8);
        assert!(out.iter().all(|r| r.as_deref().ok() == Some("r")));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert_eq!(client.stats().cache_hits, 15);
    }

    #[test]
    fn fixture_provider_by_key_and_doc() {
        let req = CompletionRequest::new("m", "p").for_doc("d7");
        let fixtures = FixtureProvider::new().with_doc("d7", "by doc");
        let client = LlmClient::new(Box::new(fixtures), ResponseCache::in_memory());
        assert_eq!(client.complete(&req).unwrap(), "by doc");
        let keyed = FixtureProvider::new()
            .with_key(req.cache_key(), "by key")
            .with_doc("d7", "x");
        assert_eq!(keyed.call(&req).unwrap(), "by key");
        assert!(matches!(
            FixtureProvider::new().call(&req),
            Err(ProviderError::Protocol(_))
        ));
    }

    #[test]
    fn transient_failures_retry_then_give_up_and_are_not_cached() {
        let attempts = Arc::new(AtomicUsize::new(0));
        let a = Arc::clone(&attempts);
        let flaky = move |_: &CompletionRequest| {
            if a.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(ProviderError::Transient("503".into()))
            } else {
                Ok("ok".to_string())
            }
        };
        let policy = RetryPolicy {
            max_retries: 3,
            base: Duration::from_millis(1),
            cap: Duration::from_millis(2),
        };
        let client = LlmClient::new(Box::new(flaky), ResponseCache::in_memory()).with_retry(policy);
        assert_eq!(
            client.complete(&CompletionRequest::new("m", "p")).unwrap(),
            "ok"
        );
        assert_eq!(attempts.load(Ordering::SeqCst), 3);
        assert_eq!(client.stats().retries, 2);

        let down = |_: &CompletionRequest| Err(ProviderError::Transient("timeout".into()));
        let client = LlmClient::new(Box::new(down), ResponseCache::in_memory()).with_retry(policy);
        let err = client
            .complete(&CompletionRequest::new("m", "p"))
            .unwrap_err();
        assert!(matches!(err, Error::Transport(_)));
        assert!(client.cache().is_empty());
        assert_eq!(client.stats().provider_calls, 4);
    }

    #[test]
    fn credential_and_protocol_errors_are_not_retried() {
        let calls = Arc::new(AtomicUsize::new(0));
        let c = Arc::clone(&calls);
        let denied = move |_: &CompletionRequest| {
            c.fetch_add(1, Ordering::SeqCst);
            Err(ProviderError::Credential("401".into()))
        };
        let client = LlmClient::new(Box::new(denied), ResponseCache::in_memory());
        assert!(matches!(
            client.complete(&CompletionRequest::new("m", "p")),
            Err(Error::Credential(_))
        ));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert!(client.cache().is_empty());
        assert!(client.complete(&CompletionRequest::new("m", "")).is_err());
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_retries: 9,
            base: Duration::from_millis(100),
            cap: Duration::from_millis(1000),
        };
        let waits: Vec<u128> = (0..6).map(|a| p.backoff(a).as_millis()).collect();
        assert_eq!(waits, [100, 200, 400, 800, 1000, 1000]);
        assert_eq!(p.backoff(200), Duration::from_millis(1000));
    }

    #[test]
    fn mock_extract_examples() {
        assert_eq!(
            mock_extract("alpha beta gamma", 3).unwrap(),
            "('alpha', 'beta', 'gamma')"
        );
        assert_eq!(mock_extract("one two", 1).unwrap(), "None");
        let seven = mock_extract("a b c d e f g", 3).unwrap();
        // Enumerate start positions 0, 3 (6 would need tokens up to 8).
        let starts: Vec<usize> = (0..7).filter(|i| i % 3 == 0 && i + 3 <= 7).collect();
        assert_eq!(seven.lines().count(), starts.len());
        assert_eq!(starts.len(), 2);
        assert!(mock_extract("", 1).is_err());
        assert!(mock_extract("a b c", 0).is_err());
    }

    #[test]
    fn mock_provider_answers_refine_and_extract() {
        let mock = MockProvider { stride: 1 };
        let doc = crate::corpus::Document {
            id: "d".into(),
            raw_text: "Coffee prices drop".into(),
            refined_text: None,
            split: crate::corpus::Split::Train,
            label: None,
        };
        let refine = CompletionRequest::new("m", render_refine_prompt(&doc).unwrap());
        assert_eq!(mock.call(&refine).unwrap(), "Coffee prices drop");
        let extract =
            CompletionRequest::new("m", render_extract_prompt("Coffee prices drop").unwrap());
        assert_eq!(mock.call(&extract).unwrap(), "('coffee', 'prices', 'drop')");
    }

    proptest! {
        #[test]
        fn mock_output_always_parses(text in "[a-zA-Z' ,.()-]{1,80}", stride in 1usize..5) {
            let out = mock_extract(&text, stride).unwrap();
            let parsed = parse_triples(&out, "d");
            prop_assert_eq!(parsed.malformed_lines, 0);
            let n = tokenize(&text).len();
            let expected = if n < 3 { 0 } else { (n - 3) / stride + 1 };
            prop_assert_eq!(parsed.triples.len(), expected);
            prop_assert_eq!(parsed.is_none, n < 3);
        }
    }
}

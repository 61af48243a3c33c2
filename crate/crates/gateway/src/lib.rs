//! Uniform access to language-model backends.
//!
//! Every backend can generate text; some can also score a fixed set of
//! continuations by log-likelihood. [`Gateway`] wraps a backend with a
//! content-addressed cache, a call counter and a bound on in-flight calls.

mod cache;
pub mod external;
mod http;
mod mock;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheValue, ResponseCache};
pub use external::ExternalScorer;
pub use http::HttpBackend;
pub use mock::{parse_script, ScriptRule, ScriptedBackend, SeededBackend};

/// Upper bound on transport attempts for any single operation.
pub const MAX_ATTEMPTS: u32 = 5;

/// Default number of concurrent calls per gateway.
pub const DEFAULT_PARALLELISM: usize = 8;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend refused: {0}")]
    Refusal(String),
    #[error("backend '{0}' cannot score choices")]
    Capability(String),
    #[error("invalid request: {0}")]
    Precondition(String),
    #[error("unexpected response: {0}")]
    Protocol(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A prompt. Chat-style prompts keep their turns; `text` is always their
/// deterministic flattening.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role_turns: Option<Vec<(String, String)>>,
}

impl Prompt {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            role_turns: None,
        }
    }

    /// Turns flatten to `speaker: text` lines separated by blank lines.
    pub fn from_turns(turns: Vec<(String, String)>) -> Self {
        let text = turns
            .iter()
            .map(|(speaker, text)| format!("{speaker}: {text}"))
            .collect::<Vec<_>>()
            .join("\n\n");
        Self {
            text,
            role_turns: Some(turns),
        }
    }

    /// SHA-256 of the flattened text, hex-encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.text.as_bytes()))
    }

    fn check(&self) -> Result<(), GatewayError> {
        if self.text.trim().is_empty() {
            return Err(GatewayError::Precondition("empty prompt".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
    /// Distinguishes repeated draws of the same prompt.
    #[serde(default)]
    pub sample_index: u32,
}

impl GenerationParams {
    pub fn new(temperature: f64, max_tokens: u32) -> Self {
        Self {
            temperature,
            max_tokens,
            sample_index: 0,
        }
    }

    pub fn with_sample(mut self, sample_index: u32) -> Self {
        self.sample_index = sample_index;
        self
    }

    fn check(&self) -> Result<(), GatewayError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(GatewayError::Precondition(format!(
                "temperature must be finite and non-negative, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::Precondition("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceScore {
    pub choice: String,
    pub log_likelihood: f64,
}

/// A model backend. Implementations must be safe to call from several
/// threads at once.
pub trait Backend: Send + Sync {
    fn generate(&self, prompt: &Prompt, params: &GenerationParams) -> Result<String, GatewayError>;

    /// Log-likelihood of each choice as a continuation of `prompt`, in order.
    fn score_choices(&self, prompt: &Prompt, choices: &[String]) -> Result<Vec<ChoiceScore>, GatewayError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    HttpOpenaiCompatible {
        /// Full URL of the completions endpoint; falls back to
        /// `EVAL_LLM_ENDPOINT`.
        #[serde(default)]
        endpoint: Option<String>,
        model: String,
        /// Falls back to `EVAL_LLM_TOKEN`.
        #[serde(default)]
        token: Option<String>,
        /// Whether the endpoint returns prompt log-probabilities (`echo`).
        #[serde(default)]
        supports_scoring: bool,
        #[serde(default = "default_attempts")]
        max_attempts: u32,
        #[serde(default = "default_backoff_ms")]
        base_delay_ms: u64,
    },
    MockScripted {
        rules: Vec<ScriptRule>,
    },
    MockSeeded {
        seed: u64,
    },
}

fn default_attempts() -> u32 {
    MAX_ATTEMPTS
}

fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub backend_id: String,
    /// Model family of the backend, copied onto generated answers.
    #[serde(default)]
    pub lm_family: String,
    #[serde(flatten)]
    pub kind: BackendKind,
}

impl BackendDescriptor {
    pub fn seeded(backend_id: &str, lm_family: &str, seed: u64) -> Self {
        Self {
            backend_id: backend_id.into(),
            lm_family: lm_family.into(),
            kind: BackendKind::MockSeeded { seed },
        }
    }

    pub fn scripted(backend_id: &str, lm_family: &str, rules: Vec<ScriptRule>) -> Self {
        Self {
            backend_id: backend_id.into(),
            lm_family: lm_family.into(),
            kind: BackendKind::MockScripted { rules },
        }
    }

    pub fn build(&self) -> Result<Box<dyn Backend>, GatewayError> {
        Ok(match &self.kind {
            BackendKind::HttpOpenaiCompatible {
                endpoint,
                model,
                token,
                supports_scoring,
                max_attempts,
                base_delay_ms,
            } => {
                let endpoint = endpoint
                    .clone()
                    .or_else(|| std::env::var("EVAL_LLM_ENDPOINT").ok())
                    .ok_or_else(|| {
                        GatewayError::Config(format!(
                            "backend '{}' has no endpoint and EVAL_LLM_ENDPOINT is unset",
                            self.backend_id
                        ))
                    })?;
                let token = token.clone().or_else(|| std::env::var("EVAL_LLM_TOKEN").ok());
                Box::new(HttpBackend::new(
                    &self.backend_id,
                    endpoint,
                    model.clone(),
                    token,
                    *supports_scoring,
                    *max_attempts,
                    std::time::Duration::from_millis(*base_delay_ms),
                )?)
            }
            BackendKind::MockScripted { rules } => Box::new(ScriptedBackend::new(&self.backend_id, rules.clone())),
            BackendKind::MockSeeded { seed } => Box::new(SeededBackend::new(*seed)),
        })
    }
}

/// Counting semaphore bounding in-flight backend calls.
struct Limiter {
    free: Mutex<usize>,
    released: Condvar,
}

impl Limiter {
    fn acquire(&self) -> LimiterGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.released.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        LimiterGuard(self)
    }
}

struct LimiterGuard<'a>(&'a Limiter);

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.released.notify_one();
    }
}

/// A backend plus cache, call counter and parallelism limit.
pub struct Gateway {
    descriptor: BackendDescriptor,
    backend: Box<dyn Backend>,
    cache: Arc<ResponseCache>,
    calls: AtomicUsize,
    limiter: Limiter,
}

impl Gateway {
    pub fn new(descriptor: BackendDescriptor) -> Result<Self, GatewayError> {
        Self::with_cache(descriptor, Arc::new(ResponseCache::in_memory()))
    }

    /// Share `cache` (possibly file-backed) with other gateways.
    pub fn with_cache(descriptor: BackendDescriptor, cache: Arc<ResponseCache>) -> Result<Self, GatewayError> {
        let backend = descriptor.build()?;
        Ok(Self::from_backend(descriptor, backend, cache))
    }

    pub fn from_backend(descriptor: BackendDescriptor, backend: Box<dyn Backend>, cache: Arc<ResponseCache>) -> Self {
        Self {
            descriptor,
            backend,
            cache,
            calls: AtomicUsize::new(0),
            limiter: Limiter {
                free: Mutex::new(DEFAULT_PARALLELISM),
                released: Condvar::new(),
            },
        }
    }

    pub fn with_parallelism(mut self, limit: usize) -> Self {
        self.limiter = Limiter {
            free: Mutex::new(limit.max(1)),
            released: Condvar::new(),
        };
        self
    }

    pub fn backend_id(&self) -> &str {
        &self.descriptor.backend_id
    }

    pub fn lm_family(&self) -> &str {
        &self.descriptor.lm_family
    }

    pub fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    /// Backend calls made so far (cache hits excluded).
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn key(&self, op: &str, prompt: &Prompt, extra: &serde_json::Value) -> String {
        let material = serde_json::json!([self.descriptor.backend_id, op, prompt.digest(), extra]);
        hex::encode(Sha256::digest(material.to_string().as_bytes()))
    }

    pub fn generate(&self, prompt: &Prompt, params: &GenerationParams) -> Result<String, GatewayError> {
        prompt.check()?;
        params.check()?;
        let key = self.key("generate", prompt, &serde_json::to_value(params).expect("params serialize"));
        let value = self.cache.get_or_compute(&key, || {
            let _slot = self.limiter.acquire();
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.backend.generate(prompt, params).map(CacheValue::Text)
        })?;
        match value {
            CacheValue::Text(t) => Ok(t),
            CacheValue::Scores(_) => Err(GatewayError::Protocol("cache entry holds scores, not text".into())),
        }
    }

    pub fn score_choices(&self, prompt: &Prompt, choices: &[String]) -> Result<Vec<ChoiceScore>, GatewayError> {
        prompt.check()?;
        if choices.is_empty() || choices.iter().any(|c| c.is_empty()) {
            return Err(GatewayError::Precondition("choices must be a non-empty list of non-empty strings".into()));
        }
        let key = self.key("score_choices", prompt, &serde_json::json!(choices));
        let value = self.cache.get_or_compute(&key, || {
            let _slot = self.limiter.acquire();
            self.calls.fetch_add(1, Ordering::SeqCst);
            let scores = self.backend.score_choices(prompt, choices)?;
            if scores.len() != choices.len() || scores.iter().any(|s| !s.log_likelihood.is_finite()) {
                return Err(GatewayError::Protocol(format!(
                    "expected {} finite scores, got {:?}",
                    choices.len(),
                    scores
                )));
            }
            Ok(CacheValue::Scores(scores))
        })?;
        match value {
            CacheValue::Scores(s) => Ok(s),
            CacheValue::Text(_) => Err(GatewayError::Protocol("cache entry holds text, not scores".into())),
        }
    }
}

/// Gateways keyed by backend id, sharing one cache.
pub fn build_gateways(
    descriptors: &[BackendDescriptor],
    cache_path: Option<&Path>,
) -> Result<BTreeMap<String, Arc<Gateway>>, GatewayError> {
    let cache = Arc::new(match cache_path {
        Some(p) => ResponseCache::open(p)?,
        None => ResponseCache::in_memory(),
    });
    let mut out = BTreeMap::new();
    for d in descriptors {
        if out.contains_key(&d.backend_id) {
            return Err(GatewayError::Config(format!("duplicate backend id '{}'", d.backend_id)));
        }
        out.insert(d.backend_id.clone(), Arc::new(Gateway::with_cache(d.clone(), cache.clone())?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn turns_flatten_deterministically() {
        let p = Prompt::from_turns(vec![("User".into(), "hi".into()), ("Agent 1".into(), "hello".into())]);
        assert_eq!(p.text, "User: hi\n\nAgent 1: hello");
        assert_eq!(p.digest(), Prompt::new("User: hi\n\nAgent 1: hello").digest());
    }

    #[test]
    fn params_validation() {
        assert!(GenerationParams::new(f64::NAN, 10).check().is_err());
        assert!(GenerationParams::new(-0.1, 10).check().is_err());
        assert!(GenerationParams::new(0.0, 0).check().is_err());
        assert!(GenerationParams::new(0.1, 1).check().is_ok());
    }

    #[test]
    fn descriptor_json_shape() {
        let d: BackendDescriptor =
            serde_json::from_str(r#"{"backend_id":"m","lm_family":"f","kind":"mock_seeded","seed":7}"#).unwrap();
        assert_eq!(d, BackendDescriptor::seeded("m", "f", 7));
        let http: BackendDescriptor = serde_json::from_str(
            r#"{"backend_id":"h","kind":"http_openai_compatible","endpoint":"http://x/v1/completions","model":"m"}"#,
        )
        .unwrap();
        match http.kind {
            BackendKind::HttpOpenaiCompatible { max_attempts, supports_scoring, .. } => {
                assert_eq!(max_attempts, 5);
                assert!(!supports_scoring);
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn empty_choices_rejected() {
        let g = Gateway::new(BackendDescriptor::seeded("m", "f", 7)).unwrap();
        let p = Prompt::new("Rate it.");
        assert!(matches!(g.score_choices(&p, &[]), Err(GatewayError::Precondition(_))));
        assert!(matches!(
            g.score_choices(&p, &["".to_string()]),
            Err(GatewayError::Precondition(_))
        ));
        assert!(matches!(
            g.generate(&Prompt::new("  "), &GenerationParams::new(0.1, 8)),
            Err(GatewayError::Precondition(_))
        ));
        assert_eq!(g.calls(), 0);
    }
}

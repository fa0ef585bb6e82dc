//! Uniform completion interface over pluggable language-model backends with
//! persistent response caching. This layer never interprets domain semantics;
//! it is pure transport plus determinism.

mod cache;
mod http;
mod mock;

pub use cache::{read_records as cache_records, Cache, CacheRecord};
pub use http::HttpBackend;
pub use mock::{lexical_stems, MockLexical, MockOracle, MockReplay, OracleEntry};

use sha2::{Digest, Sha256};
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend unavailable after {attempts} attempts: {reason}")]
    BackendUnavailable { attempts: u32, reason: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("replay miss for fingerprint {0}")]
    ReplayMiss(String),
    #[error("missing gold entry for question {0}")]
    OracleMiss(String),
    #[error("KGNAV_API_KEY environment variable not set")]
    MissingApiKey,
    #[error("cache error: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub backend: String,
    pub model: String,
    /// Routing hints for the gold-path oracle backend. Not part of the
    /// fingerprint: the prompt already determines the response.
    pub question_id: Option<String>,
    pub hop: Option<usize>,
}

impl CompletionRequest {
    pub fn new(
        backend: impl Into<String>,
        model: impl Into<String>,
        prompt: impl Into<String>,
        max_tokens: u32,
        temperature: f64,
    ) -> Self {
        Self {
            prompt: prompt.into(),
            max_tokens,
            temperature,
            backend: backend.into(),
            model: model.into(),
            question_id: None,
            hop: None,
        }
    }

    pub fn with_meta(mut self, question_id: &str, hop: usize) -> Self {
        self.question_id = Some(question_id.to_owned());
        self.hop = Some(hop);
        self
    }

    fn validate(&self) -> Result<(), LlmError> {
        if self.prompt.is_empty() {
            return Err(LlmError::InvalidRequest("empty prompt".into()));
        }
        if self.max_tokens < 1 {
            return Err(LlmError::InvalidRequest("max_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResponse {
    /// Raw backend output, unmodified.
    pub text: String,
    pub backend: String,
    pub cached: bool,
}

/// Stable, collision-resistant digest over (backend, model, prompt, decoding
/// params). Fields are length-prefixed so no two field splits collide.
pub fn fingerprint(req: &CompletionRequest) -> String {
    let mut hasher = Sha256::new();
    for field in [
        req.backend.as_str(),
        req.model.as_str(),
        req.prompt.as_str(),
    ] {
        hasher.update((field.len() as u64).to_le_bytes());
        hasher.update(field.as_bytes());
    }
    hasher.update(req.max_tokens.to_le_bytes());
    hasher.update(req.temperature.to_bits().to_le_bytes());
    hex::encode(hasher.finalize())
}

pub trait Backend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError>;
    fn tag(&self) -> &str;
    /// Mock backends are pure functions of the request.
    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Backend plus optional persistent cache. Cache access is serialized; a
/// fingerprint is contacted against the backend at most once.
pub struct Gateway {
    backend: Box<dyn Backend>,
    cache: Option<Mutex<Cache>>,
}

impl Gateway {
    pub fn new(backend: Box<dyn Backend>) -> Self {
        Self {
            backend,
            cache: None,
        }
    }

    pub fn with_cache(backend: Box<dyn Backend>, cache: Cache) -> Self {
        Self {
            backend,
            cache: Some(Mutex::new(cache)),
        }
    }

    pub fn backend_tag(&self) -> String {
        self.backend.tag().to_owned()
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        req.validate()?;
        let fp = fingerprint(req);
        if let Some(cache) = &self.cache {
            let guard = cache.lock().expect("cache lock poisoned");
            if let Some(text) = guard.get(&fp) {
                return Ok(CompletionResponse {
                    text: text.to_owned(),
                    backend: self.backend.tag().to_owned(),
                    cached: true,
                });
            }
        }
        let text = self.backend.complete(req)?;
        if let Some(cache) = &self.cache {
            let mut guard = cache.lock().expect("cache lock poisoned");
            guard.put(&fp, self.backend.tag(), &req.model, &text)?;
        }
        Ok(CompletionResponse {
            text,
            backend: self.backend.tag().to_owned(),
            cached: false,
        })
    }
}

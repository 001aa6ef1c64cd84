//! Embedding and generation provider contracts.
//!
//! Downstream code only ever talks to [`EmbeddingProvider`] and
//! [`GenerationProvider`] trait objects. [`embed_batch`] is the caller-facing
//! wrapper: it checks shapes and L2-normalizes every vector so that cosine
//! similarity equals the dot product everywhere else in the crate.

mod cache;
mod http;
mod mock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::CachedGenerator;
pub use http::{HttpEmbedder, HttpGenerator};
pub use mock::{
    mock_embed, mock_generate, party_tokens, tokenize, MockEmbedder, MockGenerator, MockMode,
    PersonaSpec, ALIEN_PREFIX, MOCK_REFUSAL,
};

use crate::util::parallel_map;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed provider response: {0}")]
    Response(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("provider returned {got} vectors for {expected} inputs")]
    CountMismatch { expected: usize, got: usize },
    #[error("provider returned a zero vector for input {0}")]
    ZeroVector(usize),
    #[error("empty input")]
    EmptyInput,
    #[error("unknown mock persona \"{0}\"")]
    UnknownPersona(String),
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
    #[error("response cache: {0}")]
    Cache(#[from] std::io::Error),
    #[error("batch aborted at request {failed_index} ({completed} of {total} completed): {source}")]
    Batch {
        completed: usize,
        total: usize,
        failed_index: usize,
        source: Box<ProviderError>,
    },
}

/// Remote endpoint settings for one provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: f64,
    pub max_in_flight: usize,
    pub retries: u32,
    /// First retry delay; doubles on each further attempt.
    pub backoff_ms: u64,
    /// Expected embedding dimension (embedding providers only).
    pub dimension: usize,
    /// Texts per embeddings request.
    pub batch_size: usize,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            endpoint: String::new(),
            model: String::new(),
            temperature: 0.7,
            timeout_secs: 60.0,
            max_in_flight: 4,
            retries: 3,
            backoff_ms: 1000,
            dimension: 768,
            batch_size: 64,
            api_key: None,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.max_in_flight == 0 {
            return Err(ProviderError::InvalidConfig("max_in_flight must be >= 1".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(ProviderError::InvalidConfig("timeout must be > 0".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(ProviderError::InvalidConfig("temperature must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(ProviderError::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }

    /// Applies `<PREFIX>_ENDPOINT` and `<PREFIX>_API_KEY` from the environment.
    pub fn apply_env(&mut self, prefix: &str) {
        if let Ok(v) = std::env::var(format!("{prefix}_ENDPOINT")) {
            self.endpoint = v;
        }
        if let Ok(v) = std::env::var(format!("{prefix}_API_KEY")) {
            self.api_key = Some(v);
        }
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> String;
    fn dimension(&self) -> usize;
    /// Raw vectors, one per text, in input order. Not necessarily normalized.
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub seed: Option<u64>,
}

pub trait GenerationProvider: Send + Sync {
    fn provider_id(&self) -> String;
    fn model(&self) -> String;
    /// Returns generated text. Refusals are ordinary text, not errors.
    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError>;
}

/// Embeds `texts` and L2-normalizes each vector.
pub fn embed_batch(
    provider: &dyn EmbeddingProvider,
    texts: &[String],
) -> Result<Vec<Vec<f64>>, ProviderError> {
    if texts.is_empty() {
        return Err(ProviderError::EmptyInput);
    }
    let raw = provider.embed_raw(texts)?;
    if raw.len() != texts.len() {
        return Err(ProviderError::CountMismatch {
            expected: texts.len(),
            got: raw.len(),
        });
    }
    let dim = provider.dimension();
    raw.into_iter()
        .enumerate()
        .map(|(i, mut v)| {
            if v.len() != dim {
                return Err(ProviderError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(ProviderError::ZeroVector(i));
            }
            v.iter_mut().for_each(|x| *x /= norm);
            Ok(v)
        })
        .collect()
}

/// Runs every request on at most `jobs` workers. Output order matches input
/// order. The first failure aborts the batch.
pub fn generate_all(
    provider: &dyn GenerationProvider,
    requests: &[GenerationRequest],
    jobs: usize,
) -> Result<Vec<String>, ProviderError> {
    let results = parallel_map(requests, jobs, |_, r| provider.generate(r));
    let total = results.len();
    let completed = results.iter().filter(|r| r.is_ok()).count();
    let mut out = Vec::with_capacity(total);
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(text) => out.push(text),
            Err(e) => {
                return Err(ProviderError::Batch {
                    completed,
                    total,
                    failed_index: i,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(out)
}

/// Generation and embedding providers used by one pipeline run.
#[derive(Clone, Copy)]
pub struct Providers<'a> {
    pub generation: &'a dyn GenerationProvider,
    pub embedding: &'a dyn EmbeddingProvider,
    /// Worker cap for concurrent provider calls.
    pub jobs: usize,
}

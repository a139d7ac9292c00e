//! Narrow interfaces to everything outside the engine: the policy model,
//! web search, page fetching, title embeddings, answer checking, label
//! lookup and token counting.
//!
//! Each interface has a deterministic offline implementation (see [`sim`],
//! [`embed`], [`fixture`]) and, behind the `http` feature, an HTTP-backed one.

pub mod embed;
pub mod fixture;
#[cfg(feature = "http")]
pub mod http;
pub mod scripted;
pub mod sim;
pub mod tokens;
pub mod verifier;
pub mod wiki;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::WebPage;

pub use embed::HashEmbedder;
pub use tokens::WhitespaceTokenizer;
pub use verifier::ReferenceVerifier;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("malformed response: {0}")]
    Decode(String),
    #[error("service unavailable: {0}")]
    Unavailable(String),
}

impl ClientError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ClientError::Transport(_) | ClientError::Timeout | ClientError::Unavailable(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Challenger,
    Solver,
    Expander,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRequest {
    pub prompt: String,
    pub num_samples: usize,
    pub temperature: f64,
    pub max_tokens: usize,
    pub role: Role,
    /// Sampling seed derived from the run's seeded streams.
    pub seed: u64,
}

impl PolicyRequest {
    pub fn check(&self) -> Result<(), ClientError> {
        if self.num_samples == 0 {
            return Err(ClientError::Precondition("num_samples must be at least 1".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ClientError::Precondition("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

pub trait PolicyClient: Send + Sync {
    /// Returns exactly `request.num_samples` completions.
    fn generate(&self, request: &PolicyRequest) -> Result<Vec<String>, ClientError>;
}

/// Calls `client` with up to `retries` extra attempts on retryable failures.
/// Never hands back a partial batch.
pub fn policy_generate(
    client: &dyn PolicyClient,
    request: &PolicyRequest,
    retries: usize,
) -> Result<Vec<String>, ClientError> {
    request.check()?;
    let mut attempt = 0;
    loop {
        match client.generate(request) {
            Ok(out) if out.len() == request.num_samples => return Ok(out),
            Ok(out) => {
                return Err(ClientError::Decode(format!(
                    "expected {} completions, got {}",
                    request.num_samples,
                    out.len()
                )))
            }
            Err(e) if e.is_retryable() && attempt < retries => attempt += 1,
            Err(e) => return Err(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub url: String,
    pub title: String,
}

pub trait SearchClient: Send + Sync {
    /// Ranked results for a keyword query.
    fn search(&self, query: &str, count: usize) -> Result<Vec<SearchHit>, ClientError>;
}

pub trait PageFetcher: Send + Sync {
    fn fetch(&self, url: &str) -> Result<WebPage, ClientError>;
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ClientError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerType {
    Numeric,
    Expression,
    Choice,
    String,
}

pub trait AnswerVerifier: Send + Sync {
    /// Whether `response` answers with something equivalent to `reference`.
    fn verify(&self, response: &str, reference: &str, answer_type: AnswerType) -> Result<bool, ClientError>;
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WikiLookup {
    pub titles: Vec<String>,
    /// Set when the lookup service could not be reached.
    pub unavailable: bool,
}

pub trait WikiValidator: Send + Sync {
    fn lookup(&self, term: &str) -> WikiLookup;
}

pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
    /// Keeps the first `max_tokens` tokens.
    fn truncate(&self, text: &str, max_tokens: usize) -> String;
}

/// The full set of collaborators the engine talks to.
#[derive(Clone)]
pub struct Clients {
    pub policy: std::sync::Arc<dyn PolicyClient>,
    pub search: std::sync::Arc<dyn SearchClient>,
    pub fetcher: std::sync::Arc<dyn PageFetcher>,
    pub embedder: std::sync::Arc<dyn Embedder>,
    pub verifier: std::sync::Arc<dyn AnswerVerifier>,
    pub wiki: std::sync::Arc<dyn WikiValidator>,
    pub tokens: std::sync::Arc<dyn TokenCounter>,
}

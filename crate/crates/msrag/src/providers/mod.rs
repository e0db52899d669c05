//! Uniform provider interfaces for chat completion, web search and text
//! embedding, plus the layers composed around them: content-addressed cache,
//! retry policy, rate limiting and call-count instrumentation.
//!
//! Deterministic mock providers are first-class citizens here, selected by
//! config, so the whole repository runs offline with no credentials.

pub mod cache;
pub mod http;
pub mod instrument;
pub mod mock;
pub mod policy;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canon;

pub use cache::{CacheMode, CacheStore};
pub use instrument::{
    CallCounts, CountingChat, CountingEmbed, CountingSearch, NoNetworkChat, NoNetworkEmbed,
    NoNetworkSearch,
};
pub use policy::{RateLimiter, RetryPolicy};

/// Errors surfaced by provider operations.
#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("network error: {0}")]
    Network(String),
    #[error("provider refused request: {0}")]
    Refusal(String),
    #[error("quota exceeded: {0}")]
    QuotaExceeded(String),
    #[error("replay miss: no cache entry for key {key}")]
    ReplayMiss { key: String },
    #[error("cache corruption at {path}: {reason}")]
    CacheCorruption { path: String, reason: String },
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl ProviderError {
    /// Transient failures worth retrying; everything else is final.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            ProviderError::Network(_) | ProviderError::QuotaExceeded(_)
        )
    }
}

pub type ProviderResult<T> = Result<T, ProviderError>;

/// Kind tag mixed into cache keys so the three provider namespaces never
/// collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Chat,
    Search,
    Embed,
}

impl ProviderKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProviderKind::Chat => "chat",
            ProviderKind::Search => "search",
            ProviderKind::Embed => "embed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// One chat-completion request. Message order is semantic and preserved by
/// the canonical serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// Single user-message request at temperature 0, the shape every
    /// pipeline call uses.
    pub fn user(model_id: impl Into<String>, content: impl Into<String>, max_tokens: u32) -> Self {
        Self {
            model_id: model_id.into(),
            messages: vec![ChatMessage {
                role: Role::User,
                content: content.into(),
            }],
            temperature: 0.0,
            max_tokens,
        }
    }

    /// Deterministic bytes used for cache keys and digests.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        canon::canonical_bytes(self)
    }

    pub fn validate(&self) -> ProviderResult<()> {
        if self.messages.is_empty() {
            return Err(ProviderError::InvalidRequest(
                "chat request has no messages".into(),
            ));
        }
        if self.model_id.is_empty() {
            return Err(ProviderError::InvalidRequest(
                "chat request has no model id".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: FinishReason,
}

impl ChatResponse {
    pub fn stop(content: impl Into<String>) -> Self {
        Self {
            content: content.into(),
            finish_reason: FinishReason::Stop,
        }
    }
}

/// One ranked search hit. Ranks within a response are 1..=k, strictly
/// increasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub query: String,
    pub rank: u32,
    pub title: String,
    pub snippet: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub model_id: String,
}

impl EmbeddingVector {
    pub fn zero(dim: usize, model_id: impl Into<String>) -> Self {
        Self {
            values: vec![0.0; dim],
            model_id: model_id.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Chat completion. Implementations must be deterministic at temperature 0
/// for caching and replay to be meaningful.
pub trait ChatProvider: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> ProviderResult<ChatResponse>;
}

/// Ranked web search. `k = 0` must return an empty list without any network
/// activity.
pub trait SearchProvider: Send + Sync {
    fn search(&self, query: &str, k: usize) -> ProviderResult<Vec<SearchResult>>;
}

/// Text embedding. Same text must always map to the identical vector; empty
/// or whitespace-only text maps to the all-zero vector of the provider's
/// dimension.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, text: &str) -> ProviderResult<EmbeddingVector>;
    fn dimension(&self) -> usize;
}

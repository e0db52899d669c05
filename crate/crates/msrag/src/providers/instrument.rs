//! Call-count instrumentation and a provider that panics on contact.
//!
//! Counting wrappers sit at two boundaries of the provider stack: outermost
//! (calls the pipeline issued) and innermost (calls that actually reached the
//! backing provider). The hermetic-replay check wraps the backing provider in
//! `NoNetwork*`, which panics if anything gets through the cache.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    ChatProvider, ChatRequest, ChatResponse, EmbeddingProvider, EmbeddingVector, ProviderResult,
    SearchProvider, SearchResult,
};

/// Shared atomic counters for the three provider kinds.
#[derive(Debug, Default)]
pub struct CallCounters {
    chat: AtomicUsize,
    search: AtomicUsize,
    embed: AtomicUsize,
}

impl CallCounters {
    pub fn snapshot(&self) -> CallCounts {
        CallCounts {
            chat: self.chat.load(Ordering::SeqCst),
            search: self.search.load(Ordering::SeqCst),
            embed: self.embed.load(Ordering::SeqCst),
        }
    }
}

/// Point-in-time counter values; subtraction gives per-run deltas.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub chat: usize,
    pub search: usize,
    pub embed: usize,
}

impl CallCounts {
    pub fn since(&self, earlier: CallCounts) -> CallCounts {
        CallCounts {
            chat: self.chat - earlier.chat,
            search: self.search - earlier.search,
            embed: self.embed - earlier.embed,
        }
    }

    pub fn total(&self) -> usize {
        self.chat + self.search + self.embed
    }
}

pub struct CountingChat {
    inner: Arc<dyn ChatProvider>,
    counters: Arc<CallCounters>,
}

impl CountingChat {
    pub fn new(inner: Arc<dyn ChatProvider>, counters: Arc<CallCounters>) -> Self {
        Self { inner, counters }
    }
}

impl ChatProvider for CountingChat {
    fn chat(&self, req: &ChatRequest) -> ProviderResult<ChatResponse> {
        self.counters.chat.fetch_add(1, Ordering::SeqCst);
        self.inner.chat(req)
    }
}

pub struct CountingSearch {
    inner: Arc<dyn SearchProvider>,
    counters: Arc<CallCounters>,
}

impl CountingSearch {
    pub fn new(inner: Arc<dyn SearchProvider>, counters: Arc<CallCounters>) -> Self {
        Self { inner, counters }
    }
}

impl SearchProvider for CountingSearch {
    fn search(&self, query: &str, k: usize) -> ProviderResult<Vec<SearchResult>> {
        if k == 0 {
            // No network activity for k = 0; not counted as an issued call.
            return Ok(Vec::new());
        }
        self.counters.search.fetch_add(1, Ordering::SeqCst);
        self.inner.search(query, k)
    }
}

pub struct CountingEmbed {
    inner: Arc<dyn EmbeddingProvider>,
    counters: Arc<CallCounters>,
}

impl CountingEmbed {
    pub fn new(inner: Arc<dyn EmbeddingProvider>, counters: Arc<CallCounters>) -> Self {
        Self { inner, counters }
    }
}

impl EmbeddingProvider for CountingEmbed {
    fn embed(&self, text: &str) -> ProviderResult<EmbeddingVector> {
        self.counters.embed.fetch_add(1, Ordering::SeqCst);
        self.inner.embed(text)
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
}

/// Panics on any contact. Placed behind a warm cache it proves a replay run
/// is fully hermetic.
pub struct NoNetworkChat;

impl ChatProvider for NoNetworkChat {
    fn chat(&self, req: &ChatRequest) -> ProviderResult<ChatResponse> {
        panic!(
            "network contact during hermetic replay: chat {}",
            req.model_id
        );
    }
}

pub struct NoNetworkSearch;

impl SearchProvider for NoNetworkSearch {
    fn search(&self, query: &str, _k: usize) -> ProviderResult<Vec<SearchResult>> {
        panic!("network contact during hermetic replay: search {query:?}");
    }
}

pub struct NoNetworkEmbed {
    pub dim: usize,
}

impl EmbeddingProvider for NoNetworkEmbed {
    fn embed(&self, text: &str) -> ProviderResult<EmbeddingVector> {
        panic!(
            "network contact during hermetic replay: embed {:?}",
            &text[..text.len().min(40)]
        );
    }

    fn dimension(&self) -> usize {
        self.dim
    }
}

//! Retry with exponential backoff and a token-bucket rate limiter.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use super::{
    ChatProvider, ChatRequest, ChatResponse, EmbeddingProvider, EmbeddingVector, ProviderResult,
    SearchProvider, SearchResult,
};
use crate::types::RetryConfig;

/// Bounded retry: at most `max_retries` retries after the first attempt, so
/// total attempts never exceed `max_retries + 1`.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    cfg: RetryConfig,
}

impl RetryPolicy {
    pub fn new(cfg: RetryConfig) -> Self {
        Self { cfg }
    }

    fn delay(&self, attempt: u32) -> Duration {
        let exp = self
            .cfg
            .base_delay_ms
            .saturating_mul(1u64 << attempt.min(16));
        Duration::from_millis(exp.min(self.cfg.max_delay_ms))
    }

    pub fn execute<T>(&self, mut call: impl FnMut() -> ProviderResult<T>) -> ProviderResult<T> {
        let mut attempt = 0;
        loop {
            match call() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < self.cfg.max_retries => {
                    std::thread::sleep(self.delay(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Process-global token bucket: at most `qps` requests per second leave the
/// process per provider, regardless of how many worker threads call in.
/// `qps = 0` disables limiting.
pub struct RateLimiter {
    qps: f64,
    state: Mutex<Bucket>,
}

struct Bucket {
    tokens: f64,
    last_refill: Instant,
}

impl RateLimiter {
    pub fn new(qps: f64) -> Self {
        let capacity = qps.max(1.0);
        Self {
            qps,
            state: Mutex::new(Bucket {
                tokens: capacity,
                last_refill: Instant::now(),
            }),
        }
    }

    pub fn disabled() -> Self {
        Self::new(0.0)
    }

    fn capacity(&self) -> f64 {
        self.qps.max(1.0)
    }

    /// Take one token, refilling from elapsed wall time. Returns how long the
    /// caller must wait before the token becomes available (zero on success).
    fn try_take(&self, now: Instant) -> Duration {
        let mut bucket = self.state.lock().expect("rate limiter poisoned");
        let elapsed = now.saturating_duration_since(bucket.last_refill);
        bucket.tokens = (bucket.tokens + elapsed.as_secs_f64() * self.qps).min(self.capacity());
        bucket.last_refill = now;
        if bucket.tokens >= 1.0 {
            bucket.tokens -= 1.0;
            Duration::ZERO
        } else {
            Duration::from_secs_f64((1.0 - bucket.tokens) / self.qps)
        }
    }

    /// Block until a token is available.
    pub fn acquire(&self) {
        if self.qps <= 0.0 {
            return;
        }
        loop {
            let wait = self.try_take(Instant::now());
            if wait.is_zero() {
                return;
            }
            std::thread::sleep(wait);
        }
    }
}

/// Chat provider wrapped in rate limiting and retry, in that order per
/// attempt: every retry re-acquires a token before touching the network.
pub struct ResilientChat {
    inner: Arc<dyn ChatProvider>,
    policy: RetryPolicy,
    limiter: Arc<RateLimiter>,
}

impl ResilientChat {
    pub fn new(
        inner: Arc<dyn ChatProvider>,
        policy: RetryPolicy,
        limiter: Arc<RateLimiter>,
    ) -> Self {
        Self {
            inner,
            policy,
            limiter,
        }
    }
}

impl ChatProvider for ResilientChat {
    fn chat(&self, req: &ChatRequest) -> ProviderResult<ChatResponse> {
        self.policy.execute(|| {
            self.limiter.acquire();
            self.inner.chat(req)
        })
    }
}

pub struct ResilientSearch {
    inner: Arc<dyn SearchProvider>,
    policy: RetryPolicy,
    limiter: Arc<RateLimiter>,
}

impl ResilientSearch {
    pub fn new(
        inner: Arc<dyn SearchProvider>,
        policy: RetryPolicy,
        limiter: Arc<RateLimiter>,
    ) -> Self {
        Self {
            inner,
            policy,
            limiter,
        }
    }
}

impl SearchProvider for ResilientSearch {
    fn search(&self, query: &str, k: usize) -> ProviderResult<Vec<SearchResult>> {
        if k == 0 {
            return Ok(Vec::new());
        }
        self.policy.execute(|| {
            self.limiter.acquire();
            self.inner.search(query, k)
        })
    }
}

pub struct ResilientEmbed {
    inner: Arc<dyn EmbeddingProvider>,
    policy: RetryPolicy,
    limiter: Arc<RateLimiter>,
}

impl ResilientEmbed {
    pub fn new(
        inner: Arc<dyn EmbeddingProvider>,
        policy: RetryPolicy,
        limiter: Arc<RateLimiter>,
    ) -> Self {
        Self {
            inner,
            policy,
            limiter,
        }
    }
}

impl EmbeddingProvider for ResilientEmbed {
    fn embed(&self, text: &str) -> ProviderResult<EmbeddingVector> {
        self.policy.execute(|| {
            self.limiter.acquire();
            self.inner.embed(text)
        })
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
}

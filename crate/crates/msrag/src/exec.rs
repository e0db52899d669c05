//! Data-parallel execution of per-example work.
//!
//! With the `parallel` feature (default) examples fan out over a rayon pool
//! sized by the worker count; without it, or with `workers = 1`, the map runs
//! strictly sequentially. Outputs always come back in input order, so
//! manifests are identical whichever path ran.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Cooperative cancellation: checked before each example starts; in-flight
/// examples drain normally.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

/// Map `f` over `items`, preserving input order. Items not started because of
/// cancellation yield `None`.
///
/// `workers = 0` means the default thread count; `workers = 1` forces the
/// sequential path even in parallel builds.
#[cfg(feature = "parallel")]
pub fn map_ordered<T, R, F>(
    items: &[T],
    workers: usize,
    cancel: &CancelToken,
    f: F,
) -> Vec<Option<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let run = |items: &[T]| {
        items
            .par_iter()
            .map(|item| {
                if cancel.is_cancelled() {
                    None
                } else {
                    Some(f(item))
                }
            })
            .collect()
    };
    match workers {
        1 => map_sequential(items, cancel, f),
        // Default worker count: rayon's shared global pool.
        0 => run(items),
        n => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("rayon pool builds")
            .install(|| run(items)),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T, R, F>(
    items: &[T],
    _workers: usize,
    cancel: &CancelToken,
    f: F,
) -> Vec<Option<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    map_sequential(items, cancel, f)
}

/// The sequential fallback; also the reference semantics for the parallel
/// path.
pub fn map_sequential<T, R, F>(items: &[T], cancel: &CancelToken, f: F) -> Vec<Option<R>>
where
    F: Fn(&T) -> R,
{
    items
        .iter()
        .map(|item| {
            if cancel.is_cancelled() {
                None
            } else {
                Some(f(item))
            }
        })
        .collect()
}

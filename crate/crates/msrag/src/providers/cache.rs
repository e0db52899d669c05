//! Content-addressed provider response cache with hermetic replay.
//!
//! One file per entry under `<cache_dir>/<first-2-hex>/<key>.json`. The key
//! is the SHA-256 of (provider kind, model id, canonical request bytes), so
//! identical requests always map to the same file. In `Record` mode misses
//! call through and persist the response; in `ReplayStrict` mode a miss is a
//! hard `ReplayMiss` error, which makes warm-cache runs provably offline.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{
    ChatProvider, ChatRequest, ChatResponse, EmbeddingProvider, EmbeddingVector, ProviderError,
    ProviderKind, ProviderResult, SearchProvider, SearchResult,
};
use crate::canon;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    /// Miss calls the provider and stores the response.
    Record,
    /// Miss is an error; nothing ever leaves the process.
    ReplayStrict,
}

/// On-disk entry format.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    request_b64: String,
    response_b64: String,
    created_at: u64,
}

pub struct CacheStore {
    dir: PathBuf,
    mode: CacheMode,
    // Writers are serialized; readers go straight to the filesystem and only
    // ever see complete files thanks to the tmp+rename protocol.
    write_lock: Mutex<()>,
}

impl CacheStore {
    pub fn new(dir: impl Into<PathBuf>, mode: CacheMode) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            mode,
            write_lock: Mutex::new(()),
        })
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    /// Cache key: pure function of the request identity.
    pub fn key(kind: ProviderKind, model_id: &str, request_bytes: &[u8]) -> String {
        let mut material = Vec::with_capacity(request_bytes.len() + model_id.len() + 16);
        material.extend_from_slice(kind.as_str().as_bytes());
        material.push(b'\n');
        material.extend_from_slice(model_id.as_bytes());
        material.push(b'\n');
        material.extend_from_slice(request_bytes);
        canon::sha256_hex(&material)
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    /// Look up a stored response, verifying entry integrity.
    pub fn lookup(
        &self,
        kind: ProviderKind,
        model_id: &str,
        request_bytes: &[u8],
    ) -> ProviderResult<Option<Vec<u8>>> {
        let key = Self::key(kind, model_id, request_bytes);
        let path = self.path_for(&key);
        let raw = match fs::read(&path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(corrupt(&path, format!("unreadable: {e}"))),
        };
        let entry: CacheEntry = serde_json::from_slice(&raw)
            .map_err(|e| corrupt(&path, format!("invalid JSON: {e}")))?;
        if entry.key != key {
            return Err(corrupt(
                &path,
                format!("stored key {} does not match {key}", entry.key),
            ));
        }
        let request = BASE64
            .decode(&entry.request_b64)
            .map_err(|e| corrupt(&path, format!("request_b64 undecodable: {e}")))?;
        if Self::key(kind, model_id, &request) != key {
            return Err(corrupt(
                &path,
                "request digest does not match key".to_string(),
            ));
        }
        let response = BASE64
            .decode(&entry.response_b64)
            .map_err(|e| corrupt(&path, format!("response_b64 undecodable: {e}")))?;
        Ok(Some(response))
    }

    pub fn store(
        &self,
        kind: ProviderKind,
        model_id: &str,
        request_bytes: &[u8],
        response_bytes: &[u8],
    ) -> ProviderResult<()> {
        let key = Self::key(kind, model_id, request_bytes);
        let path = self.path_for(&key);
        let entry = CacheEntry {
            key: key.clone(),
            request_b64: BASE64.encode(request_bytes),
            response_b64: BASE64.encode(response_bytes),
            created_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let body = serde_json::to_vec_pretty(&entry)
            .map_err(|e| corrupt(&path, format!("entry unserializable: {e}")))?;

        let _guard = self.write_lock.lock().expect("cache write lock poisoned");
        let parent = path.parent().expect("entry path has a parent");
        fs::create_dir_all(parent).map_err(|e| corrupt(&path, format!("mkdir failed: {e}")))?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, &body).map_err(|e| corrupt(&path, format!("write failed: {e}")))?;
        fs::rename(&tmp, &path).map_err(|e| corrupt(&path, format!("rename failed: {e}")))?;
        Ok(())
    }

    /// The cache contract: hit returns the stored bytes, miss either calls
    /// through and records, or fails with `ReplayMiss` in strict mode.
    pub fn get_or_call(
        &self,
        kind: ProviderKind,
        model_id: &str,
        request_bytes: &[u8],
        call: impl FnOnce() -> ProviderResult<Vec<u8>>,
    ) -> ProviderResult<Vec<u8>> {
        if let Some(hit) = self.lookup(kind, model_id, request_bytes)? {
            return Ok(hit);
        }
        match self.mode {
            CacheMode::ReplayStrict => Err(ProviderError::ReplayMiss {
                key: Self::key(kind, model_id, request_bytes),
            }),
            CacheMode::Record => {
                let response = call()?;
                self.store(kind, model_id, request_bytes, &response)?;
                Ok(response)
            }
        }
    }
}

fn corrupt(path: &Path, reason: String) -> ProviderError {
    ProviderError::CacheCorruption {
        path: path.display().to_string(),
        reason,
    }
}

/// Chat provider with a cache in front.
pub struct CachedChat {
    inner: Arc<dyn ChatProvider>,
    store: Arc<CacheStore>,
}

impl CachedChat {
    pub fn new(inner: Arc<dyn ChatProvider>, store: Arc<CacheStore>) -> Self {
        Self { inner, store }
    }
}

impl ChatProvider for CachedChat {
    fn chat(&self, req: &ChatRequest) -> ProviderResult<ChatResponse> {
        req.validate()?;
        let request_bytes = req.canonical_bytes();
        let inner = &self.inner;
        let bytes =
            self.store
                .get_or_call(ProviderKind::Chat, &req.model_id, &request_bytes, || {
                    let resp = inner.chat(req)?;
                    Ok(canon::canonical_bytes(&resp))
                })?;
        serde_json::from_slice(&bytes).map_err(|e| ProviderError::CacheCorruption {
            path: "<entry>".into(),
            reason: format!("cached chat response undecodable: {e}"),
        })
    }
}

#[derive(Serialize)]
struct SearchKey<'a> {
    query: &'a str,
    k: usize,
}

/// Search provider with a cache in front. `k = 0` short-circuits before the
/// cache and the network.
pub struct CachedSearch {
    inner: Arc<dyn SearchProvider>,
    store: Arc<CacheStore>,
    provider_id: String,
}

impl CachedSearch {
    pub fn new(
        inner: Arc<dyn SearchProvider>,
        store: Arc<CacheStore>,
        provider_id: impl Into<String>,
    ) -> Self {
        Self {
            inner,
            store,
            provider_id: provider_id.into(),
        }
    }
}

impl SearchProvider for CachedSearch {
    fn search(&self, query: &str, k: usize) -> ProviderResult<Vec<SearchResult>> {
        if k == 0 {
            return Ok(Vec::new());
        }
        let request_bytes = canon::canonical_bytes(&SearchKey { query, k });
        let inner = &self.inner;
        let bytes = self.store.get_or_call(
            ProviderKind::Search,
            &self.provider_id,
            &request_bytes,
            || {
                let results = inner.search(query, k)?;
                Ok(canon::canonical_bytes(&results))
            },
        )?;
        serde_json::from_slice(&bytes).map_err(|e| ProviderError::CacheCorruption {
            path: "<entry>".into(),
            reason: format!("cached search response undecodable: {e}"),
        })
    }
}

#[derive(Serialize)]
pub(crate) struct EmbedKey<'a> {
    pub text: &'a str,
    pub model: &'a str,
}

pub struct CachedEmbed {
    inner: Arc<dyn EmbeddingProvider>,
    store: Arc<CacheStore>,
    model_id: String,
}

impl CachedEmbed {
    pub fn new(
        inner: Arc<dyn EmbeddingProvider>,
        store: Arc<CacheStore>,
        model_id: impl Into<String>,
    ) -> Self {
        Self {
            inner,
            store,
            model_id: model_id.into(),
        }
    }
}

impl EmbeddingProvider for CachedEmbed {
    fn embed(&self, text: &str) -> ProviderResult<EmbeddingVector> {
        let request_bytes = canon::canonical_bytes(&EmbedKey {
            text,
            model: &self.model_id,
        });
        let inner = &self.inner;
        let bytes =
            self.store
                .get_or_call(ProviderKind::Embed, &self.model_id, &request_bytes, || {
                    let v = inner.embed(text)?;
                    Ok(canon::canonical_bytes(&v))
                })?;
        serde_json::from_slice(&bytes).map_err(|e| ProviderError::CacheCorruption {
            path: "<entry>".into(),
            reason: format!("cached embedding undecodable: {e}"),
        })
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
}

//! Canonical JSON bytes and content digests.
//!
//! Cache keys, config digests and prompt digests all hash the same canonical
//! form: JSON with lexicographically sorted object keys and serde_json's
//! default number formatting. Arrays keep their order (message order is
//! semantic).

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Serialize a value to canonical JSON bytes (sorted object keys).
///
/// Going through `serde_json::Value` sorts keys because the default map
/// representation is a `BTreeMap`.
pub fn canonical_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let v = serde_json::to_value(value).expect("value must be JSON-serializable");
    serde_json::to_vec(&v).expect("JSON value serializes")
}

/// Lowercase hex SHA-256 of raw bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Digest of a value's canonical bytes.
pub fn digest_of<T: Serialize>(value: &T) -> String {
    sha256_hex(&canonical_bytes(value))
}

//! Deterministic seed derivation and content digests.
//!
//! All randomness in the toolkit flows from a single base seed through
//! named sub-streams, and every artifact is traceable to a digest of the
//! serialized inputs that produced it. No ambient entropy anywhere.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of raw bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Content digest of a serializable value (canonical serde_json bytes).
pub fn digest_json<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("serializable value");
    sha256_hex(json.as_bytes())
}

/// Derives a named sub-seed from a base seed.
///
/// The same (base, label) pair always yields the same stream seed, and
/// distinct labels decorrelate module streams.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

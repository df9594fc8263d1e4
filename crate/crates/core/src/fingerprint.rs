//! Content hashes used to tie artifacts to their inputs.

use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// First 16 hex characters of the SHA-256 digest.
pub fn short_hash(bytes: &[u8]) -> String {
    sha256_hex(bytes)[..16].to_owned()
}

pub fn file_fingerprint(path: impl AsRef<std::path::Path>) -> std::io::Result<String> {
    Ok(short_hash(&std::fs::read(path)?))
}

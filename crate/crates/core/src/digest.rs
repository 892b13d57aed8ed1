//! SHA-256 digest helpers. Digests are 256-bit, lowercase hex.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex digest of all-zero bytes used as the chain anchor.
pub const ZERO_DIGEST: &str = "0000000000000000000000000000000000000000000000000000000000000000";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write;
        let _ = write!(out, "{byte:02x}");
    }
    out
}

/// Digest of a value's canonical JSON encoding. Struct fields serialize
/// in declaration order and map types are ordered, so the encoding is
/// stable for equal values.
pub fn sha256_hex_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("value serialization cannot fail");
    sha256_hex(&bytes)
}

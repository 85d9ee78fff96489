//! Deterministic, self-verifying field payloads.
//!
//! ```text
//! version u64 | ChaCha8(seed) bytes | crc32 of everything before
//! seed = first 8 bytes of sha256(identifier) ^ version
//! ```
//!
//! A reader regenerates the body from the identifier alone, so a payload
//! belonging to another field, or mixing two versions, is caught.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Smallest payload that can carry the version and checksum.
pub const MIN_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PayloadError {
    #[error("payload of {0} bytes is shorter than {MIN_LEN}")]
    TooShort(usize),
    #[error("checksum mismatch")]
    Checksum,
    #[error("body does not match the identifier")]
    Foreign,
}

fn seed(identifier: &str, version: u64) -> u64 {
    let h = Sha256::digest(identifier.as_bytes());
    u64::from_le_bytes(h[..8].try_into().unwrap()) ^ version
}

fn body(identifier: &str, version: u64, out: &mut [u8]) {
    ChaCha8Rng::seed_from_u64(seed(identifier, version)).fill_bytes(out);
}

/// `len` bytes for `identifier` at `version`; `len` must be at least [`MIN_LEN`].
pub fn generate(identifier: &str, version: u64, len: usize) -> Vec<u8> {
    assert!(len >= MIN_LEN, "payload length {len} < {MIN_LEN}");
    let mut out = vec![0u8; len];
    out[..8].copy_from_slice(&version.to_le_bytes());
    body(identifier, version, &mut out[8..len - 4]);
    let crc = crc32fast::hash(&out[..len - 4]);
    out[len - 4..].copy_from_slice(&crc.to_le_bytes());
    out
}

/// Checks a payload against its identifier and returns its version.
pub fn verify(identifier: &str, bytes: &[u8]) -> Result<u64, PayloadError> {
    let len = bytes.len();
    if len < MIN_LEN {
        return Err(PayloadError::TooShort(len));
    }
    let crc = u32::from_le_bytes(bytes[len - 4..].try_into().unwrap());
    if crc32fast::hash(&bytes[..len - 4]) != crc {
        return Err(PayloadError::Checksum);
    }
    let version = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    let mut expect = vec![0u8; len - MIN_LEN];
    body(identifier, version, &mut expect);
    if expect != bytes[8..len - 4] {
        return Err(PayloadError::Foreign);
    }
    Ok(version)
}

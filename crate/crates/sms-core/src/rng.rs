//! Deterministic RNG construction and stage-seed derivation.
//!
//! Every random choice in the crate flows from a 64-bit seed through
//! ChaCha12, and sub-seeds for pipeline stages, shards, or sweep points are
//! derived by hashing `(master, label, index)` so that independent stages
//! never share a stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// The crate-wide RNG. Seeded, portable, and platform-independent.
pub type Rng = ChaCha12Rng;

/// Builds the RNG for a given 64-bit seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Derives a sub-seed for a named stage.
///
/// The derivation is a SHA-256 of `(master, label, index)`; distinct labels
/// or indices give independent seeds, and the mapping is stable across runs
/// and platforms.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// SHA-256 of arbitrary bytes as lowercase hex; used for config and
/// checkpoint integrity hashes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{:02x}", b));
    }
    out
}

//! Seed derivation. Every random choice in the pipeline draws from a stream
//! keyed by the global seed plus a stable label (usually a document id), so
//! results never depend on iteration order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xxhash_rust::xxh64::Xxh64;

pub type StreamRng = ChaCha8Rng;

/// Hashes `parts` (NUL separated) under `global_seed`.
pub fn derive_seed(global_seed: u64, parts: &[&str]) -> u64 {
    let mut hasher = Xxh64::new(global_seed);
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            hasher.update(&[0]);
        }
        hasher.update(part.as_bytes());
    }
    hasher.digest()
}

pub fn stream(global_seed: u64, parts: &[&str]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(global_seed, parts))
}

/// Uniform value in `[0, 1)` derived from a hash, used by stateless scorers.
pub fn unit_interval(global_seed: u64, parts: &[&str]) -> f64 {
    (derive_seed(global_seed, parts) >> 11) as f64 / (1u64 << 53) as f64
}

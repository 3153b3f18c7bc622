//! Seed derivation. Every stochastic component draws from a ChaCha stream
//! whose seed is a hash of the global seed and a purpose-specific key, so
//! worker count and iteration order never change results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub const DEFAULT_SEED: u64 = 7;

pub fn derive_seed(seed: u64, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((key.len() as u64).to_le_bytes());
    h.update(key.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub fn rng_for(seed: u64, key: &str) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, key))
}

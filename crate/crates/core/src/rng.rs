//! Deterministic seed fan-out.
//!
//! All randomness flows from the single root seed in the run configuration.
//! Component streams are derived as `fnv1a64(root || tag || salt)` so partial
//! reruns (a single stage, a single epoch) reproduce bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// FNV-1a over the root seed, a purpose tag, and a salt.
pub fn derive_seed(root: u64, tag: &str, salt: u64) -> u64 {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut h = OFFSET;
    for b in root.to_le_bytes().into_iter().chain(tag.bytes()).chain(salt.to_le_bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// Stream cipher RNG for one `(root, tag, salt)` purpose.
pub fn stream(root: u64, tag: &str, salt: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(root, tag, salt))
}

//! Deterministic seed derivation.
//!
//! Every random stream in an experiment is derived from one root seed and a
//! path of labels/indices, so stages can run in any order (or in parallel)
//! and still reproduce bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `parent` and a stream label.
pub fn derive(parent: u64, label: &str) -> u64 {
    // FNV-1a over the label, then mixed with the parent.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix64(parent ^ splitmix64(h))
}

/// Derives a child seed from `parent` and an integer index.
pub fn derive_index(parent: u64, index: u64) -> u64 {
    splitmix64(parent.wrapping_add(splitmix64(index ^ 0xA076_1D64_78BD_642F)))
}

/// RNG used for all stochastic stages.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

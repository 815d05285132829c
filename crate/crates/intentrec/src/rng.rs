//! Seed derivation for reproducible, collision-free random streams.
//!
//! Every randomized stage derives its own ChaCha stream from the run seed, a
//! purpose tag, and an ordinal. Identical (seed, tag, ordinal) triples yield
//! identical streams on every platform, and distinct tags never collide, so
//! per-instance work can be scheduled in any order without changing results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mix (seed, tag, ordinal) into a fresh 64-bit seed.
pub fn derive_seed(seed: u64, tag: &str, ordinal: u64) -> u64 {
    // FNV-1a over the tag bytes, then splitmix64 finalization.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in tag.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h.rotate_left(32) ^ ordinal.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic generator for one (seed, tag, ordinal) stream.
pub fn derived_rng(seed: u64, tag: &str, ordinal: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, ordinal))
}

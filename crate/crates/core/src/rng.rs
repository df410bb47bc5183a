//! Reproducible random streams.
//!
//! Every chain owns a single sequential generator. Per-unit work inside a
//! sweep draws one `u64` key from that generator and then derives an
//! independent ChaCha stream per unit from `(key, unit)`, so results do not
//! depend on how units are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combine a key with a counter into a new well-mixed key.
#[inline]
pub fn derive(key: u64, counter: u64) -> u64 {
    mix64(key ^ mix64(counter.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub fn chain_rng(seed: u64, chain: u64) -> ChainRng {
    ChainRng::seed_from_u64(derive(seed, chain))
}

pub fn stream_rng(key: u64, index: u64) -> ChainRng {
    ChainRng::seed_from_u64(derive(key, index))
}

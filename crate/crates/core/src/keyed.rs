//! Counter-based randomness.
//!
//! Every random decision that must be reproducible independently of
//! evaluation order (edge retention, per-row streams, per-trial seeds) is
//! derived by hashing a seed together with a key. The mixer is the SplitMix64
//! finalizer applied twice, which is a bijection on `u64` for a fixed seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash `key` under `seed`.
#[inline]
pub fn keyed_u64(seed: u64, key: u64) -> u64 {
    mix(mix(seed.wrapping_add(GOLDEN)) ^ key.wrapping_mul(GOLDEN).wrapping_add(0x632b_e59b_d9b4_e019))
}

/// Uniform value in `[0, 1)` with 53 bits of precision.
#[inline]
pub fn keyed_unit(seed: u64, key: u64) -> f64 {
    (keyed_u64(seed, key) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Bernoulli(`p`) draw for `key`. `p >= 1` always succeeds, `p <= 0` never does.
#[inline]
pub fn keyed_bernoulli(seed: u64, key: u64, p: f64) -> bool {
    keyed_unit(seed, key) < p
}

/// Fold a sequence of words into one derived seed.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(mix(seed ^ 0x5851_f42d_4c95_7f2d), |acc, &w| keyed_u64(acc, w))
}

/// A stream generator for `key` under `seed`.
pub fn stream(seed: u64, key: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(keyed_u64(seed, key))
}

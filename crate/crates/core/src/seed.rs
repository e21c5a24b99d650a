//! Counter-based seed derivation.
//!
//! Every random stream in the engine is keyed by a master seed plus a path of
//! integers (phase, draw index, pixel index, ...). Keys are mixed with the
//! SplitMix64 finalizer, which is pure integer arithmetic and therefore
//! bit-identical on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and a key path.
#[inline]
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix64(seed.wrapping_add(GOLDEN)), |acc, &k| {
            mix64(acc ^ mix64(k.wrapping_add(GOLDEN)))
        })
}

/// Uniform value in `[0, 1)` built from the top 53 bits.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `[0, bound)` via multiply-shift.
#[inline]
pub fn below(bits: u64, bound: u64) -> u64 {
    ((bits as u128 * bound as u128) >> 64) as u64
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

//! Deterministic seed derivation.
//!
//! Every random draw in the crate comes from a `ChaCha8Rng` seeded through
//! [`derive`], so that per-sample streams depend only on explicit integers
//! (run seed, epoch, sample index) and never on call order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combine a base seed with a sequence of stream keys.
pub fn derive(base: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(base), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(base: u64, keys: &[u64]) -> ChaCha8Rng {
    rng(derive(base, keys))
}

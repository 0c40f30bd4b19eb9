//! Seed derivation. Every stochastic routine owns a private generator built
//! from an explicit seed; parallel tasks derive their own seeds from the task
//! index so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for task `index` of a job seeded with `seed`, as `seed ⊕ hash(index)`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    seed ^ mix64(index)
}

//! Derivation of independent RNG streams from a run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a sequence of words into one seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x5a4e_1d00_u64, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_for(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parts))
}

/// Stream tags keep draws for different purposes independent.
pub mod stream {
    pub const MASKING: u64 = 1;
    pub const ERASURE: u64 = 2;
    pub const EVAL_PARTITION: u64 = 3;
    pub const UTILITY_SAMPLE: u64 = 4;
    pub const CLASSIFIER: u64 = 5;
    pub const TASK: u64 = 6;
    pub const SPLIT: u64 = 7;
}

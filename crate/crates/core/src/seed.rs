//! Seed derivation for independent, reproducible random streams.
//!
//! Every stream in the simulator is keyed by a tuple of integers (master
//! seed, repetition, node, round, ...). Keys are folded through SplitMix64 so
//! that neighbouring keys give unrelated ChaCha seeds, and a stream never
//! depends on how many values some other stream consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a key path into one 64-bit value.
pub fn derive(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x5CCD_AD33_u64, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// A ChaCha8 generator keyed by `parts`.
pub fn stream(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(parts))
}

/// Domain tags keep streams for different purposes apart even when the
/// numeric keys coincide.
pub mod domain {
    pub const TOPOLOGY: u64 = 1;
    pub const DATASET: u64 = 2;
    pub const NODE_ROUND: u64 = 3;
    pub const REPETITION: u64 = 4;
    pub const VERIFY: u64 = 5;
}

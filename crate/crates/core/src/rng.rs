//! Seed derivation. Every random draw in the crate comes from a ChaCha
//! stream keyed by a base seed and a path of integers, so independent
//! consumers never share a stream and runs replay exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix(base), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn rng_for(base: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(base, path))
}

// stream tags
pub(crate) const TAG_GEOMETRY: u64 = 1;
pub(crate) const TAG_SAMPLES: u64 = 2;
pub(crate) const TAG_SPLIT: u64 = 3;
pub(crate) const TAG_ALLOC: u64 = 4;
pub(crate) const TAG_BATCH_LABELED: u64 = 5;
pub(crate) const TAG_BATCH_UNLABELED: u64 = 6;
pub(crate) const TAG_INIT: u64 = 7;
pub(crate) const TAG_SSL: u64 = 8;
pub(crate) const TAG_COUNTS: u64 = 9;

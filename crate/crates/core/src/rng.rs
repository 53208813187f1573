//! Seed derivation. Every random stream in the crate is a ChaCha generator
//! keyed by `(base seed, stream tag, index)`, so results never depend on
//! how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ stream) ^ index)
}

pub fn stream(base: u64, stream: u64, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(base, stream, index))
}

// Stream tags.
pub const EIGEN_STARTS: u64 = 1;
pub const GEN_W: u64 = 2;
pub const GEN_H: u64 = 3;
pub const GEN_NOISE: u64 = 4;
pub const ALS_INIT: u64 = 5;
pub const PROBES: u64 = 6;
pub const GEN_BINOMIAL: u64 = 7;

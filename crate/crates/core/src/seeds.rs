//! Seed lanes.
//!
//! Every random stream in a run is derived from one master seed plus a fixed
//! lane offset, so e.g. switching the noise distribution leaves weight
//! initialization untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lane {
    God = 0x01,
    ViewTransform = 0x02,
    ViewNoise = 0x03,
    Tasks = 0x04,
    Init = 0x10,
    Shuffle = 0x11,
    TrainNoise = 0x12,
    EvalNoise = 0x20,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `index` of `lane` under `master`.
pub fn derive(master: u64, lane: Lane, index: u64) -> u64 {
    let base = splitmix64(master ^ ((lane as u64) << 56));
    splitmix64(base.wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

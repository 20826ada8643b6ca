//! Seeded random streams. Every random decision in the crate draws from
//! a `ChaCha8Rng` derived here, so a seed fully determines a run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent child seed for a named sub-stream.
pub fn derive(seed: u64, stream: &str) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for b in stream.bytes() {
        h = splitmix(h ^ u64::from(b));
    }
    splitmix(h)
}

pub fn derive_index(seed: u64, stream: &str, index: u64) -> u64 {
    splitmix(derive(seed, stream) ^ splitmix(index))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

//! Seed derivation for named random streams.
//!
//! Every random decision in training (initialization, shuffling, masks,
//! solution choice) draws from its own ChaCha stream whose seed is a mix of
//! the global seed, a stream tag and a few integer coordinates. Two streams
//! never share state, so adding draws to one cannot shift another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Values are arbitrary but fixed forever: changing one changes
/// every trajectory that depends on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Mask = 3,
    SolutionChoice = 4,
    Curriculum = 5,
    Data = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed, a stream tag and coordinates into one 64-bit seed.
pub fn derive_seed(seed: u64, stream: Stream, coords: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(stream as u64));
    for &c in coords {
        h = splitmix64(h ^ splitmix64(c.wrapping_add(0x51_7CC1_B727_220A)));
    }
    h
}

pub fn stream_rng(seed: u64, stream: Stream, coords: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, coords))
}

//! Named random sub-streams derived from a single run seed.
//!
//! Every stochastic component (initialization, batching, sampling, negative
//! generation) draws from its own ChaCha stream so that changing how often one
//! component consumes randomness never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Batching = 2,
    Sampler = 3,
    Negatives = 4,
    Split = 5,
    Synth = 6,
}

/// A generator for `stream` under the run seed `seed`.
pub fn stream(seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Mixes a parent seed with an index; used for per-epoch and per-chain seeds.
pub fn derive(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

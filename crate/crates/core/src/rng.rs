//! Seed derivation and named random substreams.
//!
//! Every stochastic process owns a ChaCha8 stream keyed by (seed, stream id),
//! so draws in one process never shift another's sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Topology = 1,
    Arrivals = 2,
    Fading = 3,
    Exploration = 4,
    AgentInit = 5,
    AgentExploration = 6,
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based child seed: `derive_seed(master, i)` depends only on its inputs.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(index.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    stream_with_index(seed, which, 0)
}

/// A stream further split by an index (one per agent, for instance).
pub fn stream_with_index(seed: u64, which: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, index));
    rng.set_stream(which as u64);
    rng
}

/// The simulator's owned substreams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStreams {
    pub topology: ChaCha8Rng,
    pub arrivals: ChaCha8Rng,
    pub fading: ChaCha8Rng,
    pub exploration: ChaCha8Rng,
}

impl SimStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            topology: stream(seed, Stream::Topology),
            arrivals: stream(seed, Stream::Arrivals),
            fading: stream(seed, Stream::Fading),
            exploration: stream(seed, Stream::Exploration),
        }
    }
}

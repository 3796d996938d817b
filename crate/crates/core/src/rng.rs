//! Counter-based random streams.
//!
//! Every random decision is drawn from a stream keyed by
//! `(global seed, operation tag, point index)`, so results do not depend on
//! how work is split across threads or in which order points are visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Operation tags; each random consumer gets its own.
pub mod tag {
    pub const TRIPLETS: u64 = 1;
    pub const ANCHORS: u64 = 2;
    pub const DESCENT_INIT: u64 = 3;
    /// Neighbor-descent candidate sampling; the iteration number is added.
    pub const DESCENT_SAMPLE: u64 = 0x100;
    pub const SYNTH_CENTERS: u64 = 10;
    pub const SYNTH_POINTS: u64 = 11;
    pub const SYNTH_PROJECTION: u64 = 12;
    pub const SYNTH_SCRAMBLE: u64 = 13;
}

pub fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&tag.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

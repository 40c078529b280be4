//! Seeded random streams.
//!
//! Every consumer derives its generator from `(seed, stream)`, so results do
//! not depend on the order in which independent work items are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream reserved for network initialization.
pub const STREAM_INIT: u64 = 1 << 62;
/// Stream reserved for training batches.
pub const STREAM_TRAIN: u64 = (1 << 62) + 1;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for stream `stream` of `seed`; sample `i` of a run uses stream `i`.
pub fn substream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

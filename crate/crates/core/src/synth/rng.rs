//! Counter-based random streams.
//!
//! Every (seed, stage, channel) triple owns an independent ChaCha stream;
//! draws within a stream are consumed in event order. Results therefore do
//! not depend on how channels are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub(crate) enum Stage {
    Photons = 1,
    Darks = 2,
    Crosstalk = 3,
    Jitter = 4,
}

pub(crate) fn stream(seed: u64, stage: Stage, channel: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stage as u64) << 32) | channel);
    rng
}

//! Seeded random streams. Every consumer of randomness draws from its own
//! ChaCha stream derived from the experiment seed, so adding draws in one
//! place never shifts the sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Split,
    Svd,
    Users,
    Clicks,
    Synthetic,
}

pub(crate) fn stream(s: Stream) -> u64 {
    match s {
        Stream::Split => 1,
        Stream::Svd => 2,
        Stream::Users => 3,
        Stream::Clicks => 4,
        Stream::Synthetic => 5,
    }
}

/// A generator for one concern, fully determined by `(seed, concern)`.
pub fn rng_for(seed: u64, concern: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream(concern));
    rng
}

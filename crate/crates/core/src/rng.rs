//! Seeded random number generation.
//!
//! Every stochastic component takes an explicit seed and draws from a
//! ChaCha8 stream, so identical seeds give bit-identical runs.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent stream for a named subcomponent of a run.
pub fn substream(seed: u64, stream: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

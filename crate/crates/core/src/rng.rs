//! Seeded random streams.
//!
//! Every run derives independent ChaCha streams from `(seed, purpose)` so
//! that, e.g., dropout masks and parameter initialisation never share
//! state and a run is reproducible bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RunRng = ChaCha8Rng;

/// Stream purposes. The discriminant is mixed into the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Dropout = 2,
    Corruption = 3,
    Data = 4,
    Theory = 5,
}

pub fn stream(seed: u64, purpose: Stream) -> RunRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

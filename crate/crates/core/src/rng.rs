//! Seeded random streams.
//!
//! Every random draw in a run comes from a ChaCha8 generator keyed by the run
//! seed, with the 64-bit ChaCha stream id set to `(purpose << 32) | client`.
//! Streams for different purposes or clients never overlap, so the order in
//! which clients or Monte Carlo runs execute does not affect any output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Instance construction (personalization weights, function draws).
    Instance = 1,
    /// Observation noise of one client.
    Noise = 2,
    /// Inducing-point sampling of one client.
    Inducing = 3,
    /// Test and synthetic-data generation.
    Synthetic = 4,
}

pub fn stream(seed: u64, purpose: Purpose, client: usize) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 32) | client as u64);
    rng
}

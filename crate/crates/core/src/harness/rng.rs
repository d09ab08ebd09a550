use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Named random streams derived from one master seed. Each stream is a
/// separate ChaCha stream of the master key, so consuming one never shifts
/// another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    /// Packet arrivals seen during training.
    Arrivals = 1,
    /// Network weight initialization.
    Init = 2,
    Exploration = 3,
    Replay = 4,
    /// Packet arrivals seen during test and baseline episodes.
    Evaluation = 5,
}

pub fn stream(master: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(which as u64);
    rng
}

/// A 64-bit seed drawn from a named stream, for components that own their RNG.
pub fn stream_seed(master: u64, which: Stream) -> u64 {
    stream(master, which).next_u64()
}

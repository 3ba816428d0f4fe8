//! Seeded, splittable randomness.
//!
//! Every run owns one master seed. Subsystems draw from independent ChaCha
//! streams keyed by [`Stream`], so adding draws in one subsystem never shifts
//! the numbers another subsystem sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Independent stream identifiers under one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    TaskMeans,
    Data,
    Shift,
    Split,
    Init,
    Batches,
    Augment,
    Demos,
    Calibration,
    Env,
    Policy,
    Replay,
    Controller,
    Custom(u64),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::TaskMeans => 1,
            Stream::Data => 2,
            Stream::Shift => 3,
            Stream::Split => 4,
            Stream::Init => 5,
            Stream::Batches => 6,
            Stream::Augment => 7,
            Stream::Demos => 8,
            Stream::Calibration => 9,
            Stream::Env => 10,
            Stream::Policy => 11,
            Stream::Replay => 12,
            Stream::Controller => 13,
            Stream::Custom(k) => 1_000 + k,
        }
    }
}

/// Generator for `stream` under `seed`.
pub fn stream(seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

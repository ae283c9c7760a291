//! Seeded random streams.
//!
//! Every random decision in the crate draws from [`Rng`], which is ChaCha8
//! keyed by a 64-bit seed. ChaCha output is specified independently of the
//! host, so a given seed replays the same draws on every platform.
//! Parallel work never shares a stream: each task derives its own with
//! [`fork`], keyed by the parent seed and a task index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Root stream for `seed`.
pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream number `stream` under `seed`.
///
/// Streams with different indices never overlap, so results do not depend on
/// how tasks are scheduled across threads.
pub fn fork(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

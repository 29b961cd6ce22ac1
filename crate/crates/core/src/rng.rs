//! Reproducible random streams.
//!
//! Every run owns a ChaCha8 stream keyed by `(base_seed, run_index)`, so
//! parallel ensembles are deterministic regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Independent substream `run_index` of the generator seeded by `base_seed`.
pub fn stream(base_seed: u64, run_index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(run_index);
    rng
}

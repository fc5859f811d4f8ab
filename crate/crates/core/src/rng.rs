//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 keystream keyed by the run seed, with the worker
//! id as the stream selector and the iteration as the block offset. A worker's
//! draws at iteration `t` therefore never depend on how many draws other
//! workers made, or in which order the workers were scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RngStream = ChaCha8Rng;

/// Stream id shared by all workers (used for shared random-k masks).
pub const SHARED_STREAM: u64 = u64::MAX;

/// Stream ids at or above this value are reserved for data generation.
const DATA_STREAM_BASE: u64 = 1 << 62;

/// Words reserved per iteration within one stream.
const WORDS_PER_STEP: u128 = 1 << 32;

pub fn worker_rng_stream(run_seed: u64, worker_id: u64, t: u64) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    rng.set_stream(worker_id);
    rng.set_word_pos(u128::from(t) * WORDS_PER_STEP);
    rng
}

/// Stream used to generate problem data; `domain` separates independent uses
/// (features, labels, planted solutions, ...).
pub fn data_stream(data_seed: u64, domain: u64) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
    rng.set_stream(DATA_STREAM_BASE + domain);
    rng
}

//! Per-trajectory random streams.
//!
//! Every trajectory draws from its own ChaCha8 stream selected by the
//! trajectory index, so ensemble results do not depend on how trajectories
//! are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TrajectoryRng = ChaCha8Rng;

/// Random stream for trajectory `index` of an ensemble seeded with `master_seed`.
pub fn trajectory_rng(master_seed: u64, index: u64) -> TrajectoryRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

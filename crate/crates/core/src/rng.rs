//! Deterministic stream derivation for trajectory ensembles.
//!
//! Every trajectory (or EPR run) gets its own ChaCha stream keyed by the
//! master seed and indexed by the trajectory number, so results are
//! reproducible and independent of execution order and worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// RNG for trajectory `index` of an ensemble keyed by `master_seed`.
///
/// Streams with the same key and different stream ids are independent, so
/// trajectories can be simulated in any order or in parallel.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(index.into());
    rng
}

/// Derives a sub-experiment seed from a master seed and a fixed tag
/// (splitmix64 round). Used when one report aggregates several ensembles.
pub fn derive_seed(master_seed: u64, tag: u64) -> u64 {
    let mut z = master_seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

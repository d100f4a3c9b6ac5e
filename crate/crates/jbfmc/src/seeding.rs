//! Deterministic seed derivation.
//!
//! Every trial derives its random streams from a stable 64-bit hash of
//! `(master seed, grid point index, trial index)`, so any single trial can be
//! re-run in isolation and sweeps are reproducible regardless of the worker
//! count used to execute them.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// Stream tag for channel realizations.
pub const STREAM_CHANNELS: u64 = 0x43_48_41_4e;
/// Stream tag for pilot signals.
pub const STREAM_PILOTS: u64 = 0x50_49_4c_4f;
/// Stream tag for observation noise.
pub const STREAM_NOISE: u64 = 0x4e_4f_49_53;
/// Stream tag for the factorization's internal randomness.
pub const STREAM_FACTORIZATION: u64 = 0x46_41_43_54;

/// SplitMix64 finalizer; a stable, well-mixed 64-bit hash step.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable hash of a seed and a context word.
pub fn mix(seed: u64, word: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ word)
}

/// Seed for one trial of one grid point.
pub fn trial_seed(master: u64, point_index: u64, trial_index: u64) -> u64 {
    mix(mix(master, point_index), trial_index)
}

/// Independent random stream for one concern of a trial.
pub fn stream_rng(trial_seed: u64, stream_tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(trial_seed, stream_tag))
}

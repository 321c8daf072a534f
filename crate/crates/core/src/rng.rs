//! Per-task random streams derived from a master seed.
//!
//! Every replicate, Monte Carlo path and simulation trial draws from its own
//! ChaCha stream selected by `(seed, domain, index)`, so results never depend
//! on the order in which tasks are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains, kept distinct so that different uses of one master seed
/// never share a stream.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub(crate) enum Domain {
    Multiplier = 1,
    McPath = 2,
    Trial = 3,
    TrialBootstrap = 4,
    Scenario = 5,
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed, e.g. the master seed handed to one simulation trial.
pub(crate) fn derive_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    mix(mix(seed ^ (domain as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)) ^ index)
}

pub(crate) fn stream_rng(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ (domain as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)));
    rng.set_stream(index);
    rng
}

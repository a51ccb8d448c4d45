//! Deterministic stream-splitting randomness.
//!
//! Every run owns one root seed. Each iteration draws from its own ChaCha
//! streams, keyed by `(iteration, lane)`, so the draws of iteration `t` never
//! depend on how much randomness earlier iterations consumed. In particular,
//! changing the mini-batch size `m` does not reshuffle the draws of any other
//! iteration.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Lane used to pick the observation (data point, episode) of an iteration.
pub const LANE_OBSERVATION: u64 = 0;
/// Lane used for model draws (Gibbs samples, imputations, transitions).
pub const LANE_MODEL: u64 = 1;
/// Lane used for initialization and dataset generation.
pub const LANE_INIT: u64 = 2;
/// Lane used by diagnostics (Monte Carlo checks), kept apart from training.
pub const LANE_DIAGNOSTIC: u64 = 3;

const LANES_PER_ITER: u64 = 8;

/// A root seed from which per-`(iteration, lane)` generators are derived.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamRng {
    root: u64,
}

impl StreamRng {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// The generator for lane `lane` of iteration `iter`.
    pub fn stream(&self, iter: u64, lane: u64) -> ChaCha8Rng {
        debug_assert!(lane < LANES_PER_ITER);
        let mut rng = ChaCha8Rng::seed_from_u64(self.root);
        rng.set_stream(iter.wrapping_mul(LANES_PER_ITER).wrapping_add(lane));
        rng
    }
}

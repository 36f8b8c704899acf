//! Counter-based Gaussian noise.
//!
//! Every draw is addressed by `(seed, trajectory, slot)`: the ChaCha stream id is
//! the trajectory index and the block counter starts at `slot << 32`, so a draw
//! never depends on how many other draws happened before it or on which thread
//! made them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Scalar;

/// Slot reserved for the booting noise.
pub const BOOT_SLOT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStream {
    seed: u64,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn rng(&self, trajectory: u64, slot: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trajectory);
        rng.set_word_pos((slot as u128) << 32);
        rng
    }

    /// `d` independent standard normals for `(trajectory, slot)`.
    pub fn gaussian<T: Scalar>(&self, trajectory: u64, slot: u32, d: usize) -> Vec<T> {
        let mut rng = self.rng(trajectory, slot);
        (0..d).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect()
    }

    /// Booting noise of a trajectory.
    pub fn boot<T: Scalar>(&self, trajectory: u64, d: usize) -> Vec<T> {
        self.gaussian(trajectory, BOOT_SLOT, d)
    }

    /// Uniform draws on `[0, 1)` for `(trajectory, slot)`.
    pub fn uniform(&self, trajectory: u64, slot: u32, n: usize) -> Vec<f64> {
        let mut rng = self.rng(trajectory, slot);
        (0..n).map(|_| rng.random::<f64>()).collect()
    }
}

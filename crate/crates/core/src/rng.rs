//! Random streams. Everything that samples takes an explicit generator so
//! runs are reproducible bit-for-bit at a fixed seed.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

/// Seedable generator used by training and the CLI. Its state
/// `(seed, stream, word_pos)` is what checkpoints persist.
pub type StreamRng = rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

#[inline]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| standard_normal(rng)).collect()
}

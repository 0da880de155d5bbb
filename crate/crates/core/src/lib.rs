//! Numerical core for spectral circulant (1D) and BCCB (2D) layers whose
//! primitive parameters are the nonredundant real-FFT coefficients.
//!
//! The crate is `no_std` and only needs an allocator. It contains:
//!
//! * [`fft`]: real FFTs, half-spectrum / half-plane storage, Hermitian
//!   completion and the effective-coordinate layouts.
//! * [`tape`]: a small reverse-mode tape with hand-written vector-Jacobian
//!   products for every op the models need.
//! * [`layers`]: spectral layers, band-limit masks, gradients and
//!   parameter-count arithmetic.
//! * [`prior`]: the discrete spectral GP prior on the circle and torus.
//! * [`svi`]: low-rank + diagonal guides, closed-form KL, ELBO, Adam and
//!   the training loop.
//! * [`certify`]: exact spectral norms, Lipschitz products, margin
//!   certificates and prior tail bounds.
//! * [`metrics`]: calibration and OOD metrics.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod certify;
mod error;
pub mod fft;
pub mod layers;
pub mod linalg;
pub(crate) mod math;
pub mod metrics;
pub mod prior;
pub mod rng;
pub mod svi;
pub mod tape;

pub use error::{Error, Result};
pub use num_complex::Complex64;

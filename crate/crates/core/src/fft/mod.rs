//! Real FFTs with explicit Hermitian bookkeeping.
//!
//! Convention: forward transforms are unnormalised and inverses carry the
//! `1/n` (or `1/(H W)`) factor, so a stored half-spectrum is exactly the
//! eigenvalue list of the circulant operator it defines.

mod dense;
mod layout;
mod plan;
mod spectrum;

pub use dense::{bccb_dense, circulant_dense};
pub use layout::{Layout1d, Layout2d, Slot, SlotKind};
pub use plan::FftPlan;
pub use spectrum::{
    half_len, hermitian_complete_1d, irfft_1d, irfft_2d, rfft_1d, rfft_2d, HalfPlane, HalfSpectrum,
    RealFft, RealFft2d,
};

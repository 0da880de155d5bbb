//! Discrete spectral GP prior on the circle `Z_n` and the torus `Z_H x Z_W`.
//!
//! Nonredundant Fourier coefficients are independent: self-conjugate bins are
//! real `N(0, S)`, the rest are proper complex Gaussians with variance `S`
//! (`S/2` per component). Filters built with the unitary inverse DFT are
//! stationary with covariance `k(tau) = (1/n) sum_k S(k) e^{2 pi i k tau / n}`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::fft::{half_len, HalfPlane, HalfSpectrum, Layout1d, Layout2d, RealFft, RealFft2d, SlotKind};
use crate::math;
use crate::rng::standard_normal;

/// Wrapped normalised radius on `Z_n`, without range checks.
#[inline]
pub(crate) fn radius_1d(k: usize, n: usize) -> f64 {
    let k = k % n;
    let wrapped = k.min(n - k);
    wrapped as f64 / (n / 2).max(1) as f64
}

/// `min(k, n-k) / max(1, floor(n/2))`.
pub fn rho_1d(k: usize, n: usize) -> Result<f64> {
    if k >= n {
        return Err(Error::OutOfRange { index: k, len: n });
    }
    Ok(radius_1d(k, n))
}

/// `sqrt(rho_H(u)^2 + rho_W(v)^2)`; accepts full-grid indices.
pub fn rho_2d(u: usize, v: usize, rows: usize, cols: usize) -> f64 {
    let a = radius_1d(u, rows);
    let b = radius_1d(v, cols);
    math::sqrt(a * a + b * b)
}

/// Checked variant of [`rho_2d`].
pub fn rho_2d_checked(u: usize, v: usize, rows: usize, cols: usize) -> Result<f64> {
    if u >= rows {
        return Err(Error::OutOfRange { index: u, len: rows });
    }
    if v >= cols {
        return Err(Error::OutOfRange { index: v, len: cols });
    }
    Ok(rho_2d(u, v, rows, cols))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grid {
    Circle(usize),
    Torus { rows: usize, cols: usize },
}

/// Envelope `S(rho) = sigma0^2 / (1 + rho^alpha)` over a grid.
///
/// `rho^0` is taken as 1 everywhere (including `rho = 0`) so that `alpha = 0`
/// is exactly flat at `sigma0^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumProfile {
    pub sigma0_sq: f64,
    pub alpha: f64,
    pub grid: Grid,
}

impl SpectrumProfile {
    pub fn new(sigma0_sq: f64, alpha: f64, grid: Grid) -> Result<Self> {
        if !(sigma0_sq >= 0.0) || !sigma0_sq.is_finite() {
            return Err(invalid(format!("sigma0^2 must be nonnegative, got {sigma0_sq}")));
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(invalid(format!("alpha must be nonnegative, got {alpha}")));
        }
        match grid {
            Grid::Circle(0) => return Err(Error::EmptySignal),
            Grid::Torus { rows, cols } if rows == 0 || cols == 0 => {
                return Err(Error::EmptySignal)
            }
            _ => {}
        }
        Ok(Self {
            sigma0_sq,
            alpha,
            grid,
        })
    }

    /// Flat profile with `S = value` everywhere.
    pub fn flat(value: f64, grid: Grid) -> Result<Self> {
        Self::new(2.0 * value, 0.0, grid)
    }

    #[inline]
    pub fn at_radius(&self, rho: f64) -> f64 {
        envelope(self.sigma0_sq, self.alpha, rho)
    }

    pub fn variance_1d(&self, k: usize) -> Result<f64> {
        match self.grid {
            Grid::Circle(n) => Ok(self.at_radius(rho_1d(k, n)?)),
            Grid::Torus { .. } => Err(invalid("1D bin on a 2D profile")),
        }
    }

    pub fn variance_2d(&self, u: usize, v: usize) -> Result<f64> {
        match self.grid {
            Grid::Torus { rows, cols } => Ok(self.at_radius(rho_2d_checked(u, v, rows, cols)?)),
            Grid::Circle(_) => Err(invalid("2D bin on a 1D profile")),
        }
    }

    fn circle(&self) -> Result<usize> {
        match self.grid {
            Grid::Circle(n) => Ok(n),
            Grid::Torus { .. } => Err(invalid("expected a 1D profile")),
        }
    }

    fn torus(&self) -> Result<(usize, usize)> {
        match self.grid {
            Grid::Torus { rows, cols } => Ok((rows, cols)),
            Grid::Circle(_) => Err(invalid("expected a 2D profile")),
        }
    }
}

#[inline]
pub(crate) fn envelope(sigma0_sq: f64, alpha: f64, rho: f64) -> f64 {
    // libm's pow(0, 0) = 1 matches the flat-spectrum convention.
    sigma0_sq / (1.0 + math::powf(rho, alpha))
}

/// `dS/d alpha` at fixed radius.
#[inline]
pub(crate) fn envelope_dalpha(sigma0_sq: f64, alpha: f64, rho: f64) -> f64 {
    if rho <= 0.0 {
        return 0.0;
    }
    let p = math::powf(rho, alpha);
    -sigma0_sq * p * math::ln(rho) / ((1.0 + p) * (1.0 + p))
}

/// Per-coordinate prior variances in a 1D layout: `S` for self-conjugate
/// bins, `S/2` for each component of a complex bin.
pub fn coordinate_variances_1d(profile: &SpectrumProfile, layout: &Layout1d) -> Result<Vec<f64>> {
    let n = profile.circle()?;
    if n != layout.signal_len() {
        return Err(invalid(format!(
            "profile on Z_{n} but layout for length {}",
            layout.signal_len()
        )));
    }
    let mut tau = Vec::with_capacity(layout.d_eff());
    for s in layout.slots() {
        let v = profile.at_radius(radius_1d(s.bin, n));
        push_slot_variance(&mut tau, s.kind, v);
    }
    Ok(tau)
}

/// 2D analogue of [`coordinate_variances_1d`] for one half-plane.
pub fn coordinate_variances_2d(profile: &SpectrumProfile, layout: &Layout2d) -> Result<Vec<f64>> {
    let (rows, cols) = profile.torus()?;
    if rows != layout.rows() || cols != layout.cols() {
        return Err(invalid("profile and layout grids differ"));
    }
    let wh = half_len(cols);
    let mut tau = Vec::with_capacity(layout.d_eff());
    for s in layout.slots() {
        let v = profile.at_radius(rho_2d(s.bin / wh, s.bin % wh, rows, cols));
        push_slot_variance(&mut tau, s.kind, v);
    }
    Ok(tau)
}

fn push_slot_variance(tau: &mut Vec<f64>, kind: SlotKind, s: f64) {
    match kind {
        SlotKind::Real => tau.push(s),
        SlotKind::Complex => {
            tau.push(0.5 * s);
            tau.push(0.5 * s);
        }
    }
}

fn sample_coords<R: Rng + ?Sized>(tau: &[f64], rng: &mut R) -> Vec<f64> {
    tau.iter()
        .map(|&t| math::sqrt(t) * standard_normal(rng))
        .collect()
}

/// Draws the active half-spectrum coefficients from the prior.
pub fn sample_prior_spectrum_1d<R: Rng + ?Sized>(
    profile: &SpectrumProfile,
    layout: &Layout1d,
    rng: &mut R,
) -> Result<HalfSpectrum> {
    let tau = coordinate_variances_1d(profile, layout)?;
    layout.unpack(&sample_coords(&tau, rng))
}

/// Draws one half-plane from the prior.
pub fn sample_prior_plane_2d<R: Rng + ?Sized>(
    profile: &SpectrumProfile,
    layout: &Layout2d,
    rng: &mut R,
) -> Result<HalfPlane> {
    let tau = coordinate_variances_2d(profile, layout)?;
    layout.unpack(&sample_coords(&tau, rng))
}

/// Samples a stationary filter `w_t = n^{-1/2} sum_k F_k e^{2 pi i k t / n}`.
pub fn sample_prior_filter_1d<R: Rng + ?Sized>(
    profile: &SpectrumProfile,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = profile.circle()?;
    let spec = sample_prior_spectrum_1d(profile, &Layout1d::full(n), rng)?;
    let mut w = RealFft::new(n).inverse(&spec)?;
    let scale = math::sqrt(n as f64);
    w.iter_mut().for_each(|v| *v *= scale);
    Ok(w)
}

/// Closed-form stationary covariance `k(tau)`, `tau = 0..n-1`.
pub fn prior_covariance_1d(profile: &SpectrumProfile) -> Result<Vec<f64>> {
    let n = profile.circle()?;
    let coeffs = (0..half_len(n))
        .map(|k| Complex64::new(profile.at_radius(radius_1d(k, n)), 0.0))
        .collect();
    RealFft::new(n).inverse(&HalfSpectrum::new(n, coeffs)?)
}

/// Samples a stationary random field on the torus, row-major `rows x cols`.
pub fn sample_prior_field_2d<R: Rng + ?Sized>(
    profile: &SpectrumProfile,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (rows, cols) = profile.torus()?;
    let plane = sample_prior_plane_2d(profile, &Layout2d::new(rows, cols, None)?, rng)?;
    let mut w = RealFft2d::new(rows, cols).inverse(&plane)?;
    let scale = math::sqrt((rows * cols) as f64);
    w.iter_mut().for_each(|v| *v *= scale);
    Ok(w)
}

/// Closed-form covariance `kappa(tau_x, tau_y)`, row-major over lags.
pub fn prior_covariance_2d(profile: &SpectrumProfile) -> Result<Vec<f64>> {
    let (rows, cols) = profile.torus()?;
    let wh = half_len(cols);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); rows * wh];
    for u in 0..rows {
        for v in 0..wh {
            coeffs[u * wh + v] = Complex64::new(profile.at_radius(rho_2d(u, v, rows, cols)), 0.0);
        }
    }
    RealFft2d::new(rows, cols).inverse(&HalfPlane::new(rows, cols, coeffs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SeedableRng, StreamRng};
    use core::f64::consts::PI;

    #[test]
    fn rho_examples() {
        assert_eq!(rho_1d(5, 8).unwrap(), 0.75);
        assert_eq!(rho_1d(0, 8).unwrap(), 0.0);
        assert!((rho_2d(4, 4, 8, 8) - core::f64::consts::SQRT_2).abs() < 1e-15);
        assert!(rho_1d(8, 8).is_err());
        assert!(rho_2d_checked(0, 9, 8, 8).is_err());
        assert_eq!(rho_1d(0, 1).unwrap(), 0.0);
    }

    #[test]
    fn variance_profile_examples() {
        let g = Grid::Circle(8);
        let flat = SpectrumProfile::new(1.0, 0.0, g).unwrap();
        for k in 0..8 {
            assert_eq!(flat.variance_1d(k).unwrap(), 0.5);
        }
        let p2 = SpectrumProfile::new(1.7, 2.0, g).unwrap();
        assert_eq!(p2.variance_1d(0).unwrap(), 1.7);
        // rho = 0.75: decreasing in alpha; rho = 1: sigma0^2 / 2 for all alpha.
        let s: Vec<f64> = [0.0, 2.0, 8.0]
            .iter()
            .map(|&a| SpectrumProfile::new(1.0, a, g).unwrap().variance_1d(3).unwrap())
            .collect();
        assert_eq!(s[0], 0.5);
        assert!((s[1] - 1.0 / (1.0 + 0.5625)).abs() < 1e-15);
        assert!((s[2] - 1.0 / (1.0 + 0.75f64.powi(8))).abs() < 1e-15);
        // At rho = 0.75 larger alpha means smaller rho^alpha, so S grows
        // toward sigma0^2; at rho > 1 it shrinks. Check both directions.
        assert!(s[0] < s[1] && s[1] < s[2]);
        let wide = Grid::Torus { rows: 8, cols: 8 };
        let sw: Vec<f64> = [0.0, 2.0, 8.0]
            .iter()
            .map(|&a| SpectrumProfile::new(1.0, a, wide).unwrap().variance_2d(4, 4).unwrap())
            .collect();
        assert!(sw[0] > sw[1] && sw[1] > sw[2]);
        for a in [0.0, 2.0, 8.0] {
            let p = SpectrumProfile::new(1.0, a, g).unwrap();
            assert_eq!(p.variance_1d(4).unwrap(), 0.5);
        }
    }

    #[test]
    fn profile_is_even() {
        let p = SpectrumProfile::new(1.0, 1.3, Grid::Circle(11)).unwrap();
        for k in 1..11 {
            assert_eq!(p.variance_1d(k).unwrap(), p.variance_1d(11 - k).unwrap());
        }
        let p2 = SpectrumProfile::new(1.0, 2.5, Grid::Torus { rows: 6, cols: 5 }).unwrap();
        for u in 0..6 {
            for v in 0..5 {
                assert_eq!(
                    p2.variance_2d(u, v).unwrap(),
                    p2.variance_2d((6 - u) % 6, (5 - v) % 5).unwrap()
                );
            }
        }
    }

    #[test]
    fn zero_spectrum_limits() {
        let p = SpectrumProfile::new(0.0, 2.0, Grid::Circle(16)).unwrap();
        let mut rng = StreamRng::seed_from_u64(1);
        let w = sample_prior_filter_1d(&p, &mut rng).unwrap();
        assert!(w.iter().all(|&v| v == 0.0));
        let p2 = SpectrumProfile::new(0.0, 0.0, Grid::Torus { rows: 4, cols: 4 }).unwrap();
        let f = sample_prior_field_2d(&p2, &mut rng).unwrap();
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flat_covariance_is_delta() {
        let c = 0.8;
        let p = SpectrumProfile::flat(c, Grid::Circle(12)).unwrap();
        let k = prior_covariance_1d(&p).unwrap();
        assert!((k[0] - c).abs() < 1e-14);
        for v in &k[1..] {
            assert!(v.abs() < 1e-14);
        }
        let p2 = SpectrumProfile::flat(c, Grid::Torus { rows: 4, cols: 4 }).unwrap();
        let kap = prior_covariance_2d(&p2).unwrap();
        assert!((kap[0] - c).abs() < 1e-14);
        for v in &kap[1..] {
            assert!(v.abs() < 1e-14);
        }
    }

    #[test]
    fn covariance_matches_direct_sum_and_is_even() {
        let n = 10;
        let p = SpectrumProfile::new(1.3, 2.0, Grid::Circle(n)).unwrap();
        let k = prior_covariance_1d(&p).unwrap();
        for tau in 0..n {
            let mut re = 0.0;
            let mut im = 0.0;
            for kk in 0..n {
                let (s, c) = math::sin_cos(2.0 * PI * ((kk * tau) % n) as f64 / n as f64);
                let sv = p.variance_1d(kk).unwrap();
                re += sv * c;
                im += sv * s;
            }
            assert!((re / n as f64 - k[tau]).abs() < 1e-14);
            assert!(im.abs() / (n as f64) < 1e-12);
            assert!((k[tau] - k[(n - tau) % n]).abs() < 1e-14);
        }
    }

    #[test]
    fn coordinate_variances_flat() {
        let p = SpectrumProfile::flat(1.0, Grid::Circle(4)).unwrap();
        assert_eq!(
            coordinate_variances_1d(&p, &Layout1d::full(4)).unwrap(),
            vec![1.0, 0.5, 0.5, 1.0]
        );
        let p5 = SpectrumProfile::flat(1.0, Grid::Circle(5)).unwrap();
        assert_eq!(
            coordinate_variances_1d(&p5, &Layout1d::full(5)).unwrap(),
            vec![1.0, 0.5, 0.5, 0.5, 0.5]
        );
    }
}

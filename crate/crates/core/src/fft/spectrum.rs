use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::plan::FftPlan;
use crate::error::{shape_err, Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Number of stored bins for a real signal of length `n`: `floor(n/2) + 1`.
#[inline]
pub fn half_len(n: usize) -> usize {
    n / 2 + 1
}

#[inline]
fn is_self_conjugate(k: usize, n: usize) -> bool {
    k == 0 || 2 * k == n
}

/// Nonredundant RFFT coefficients of a real length-`n` signal.
///
/// `coeffs[0]` is real, and so is `coeffs[n/2]` when `n` is even.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpectrum {
    n: usize,
    coeffs: Vec<Complex64>,
}

impl HalfSpectrum {
    pub fn new(n: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySignal);
        }
        if coeffs.len() != half_len(n) {
            return Err(shape_err(format!(
                "half-spectrum of length-{n} signal needs {} bins, got {}",
                half_len(n),
                coeffs.len()
            )));
        }
        for (k, c) in coeffs.iter().enumerate() {
            if !c.re.is_finite() || !c.im.is_finite() {
                return Err(Error::NonFinite(k));
            }
            if is_self_conjugate(k, n) && c.im != 0.0 {
                return Err(Error::NonRealSelfConjugate(k));
            }
        }
        Ok(Self { n, coeffs })
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n > 0);
        Self {
            n,
            coeffs: vec![ZERO; half_len(n)],
        }
    }

    /// Flat response: every bin equals `value`.
    pub fn constant(n: usize, value: f64) -> Self {
        assert!(n > 0);
        Self {
            n,
            coeffs: vec![Complex64::new(value, 0.0); half_len(n)],
        }
    }

    pub fn signal_len(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn is_self_conjugate(&self, k: usize) -> bool {
        is_self_conjugate(k, self.n)
    }
}

/// RFFT_2 half-plane of a real `rows x cols` grid: `rows x (cols/2 + 1)`
/// complex bins stored row-major.
///
/// In the self-conjugate columns (`v = 0` and `v = cols/2` for even `cols`)
/// rows `u` and `(rows - u) mod rows` are complex conjugates, and the bins
/// that are their own partner are real.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfPlane {
    rows: usize,
    cols: usize,
    coeffs: Vec<Complex64>,
}

impl HalfPlane {
    pub fn new(rows: usize, cols: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptySignal);
        }
        let wh = half_len(cols);
        if coeffs.len() != rows * wh {
            return Err(shape_err(format!(
                "half-plane of {rows}x{cols} grid needs {} bins, got {}",
                rows * wh,
                coeffs.len()
            )));
        }
        for (i, c) in coeffs.iter().enumerate() {
            if !c.re.is_finite() || !c.im.is_finite() {
                return Err(Error::NonFinite(i));
            }
        }
        let plane = Self { rows, cols, coeffs };
        for v in plane.self_conjugate_columns() {
            for u in 0..rows {
                let partner = (rows - u) % rows;
                let c = plane.get(u, v);
                if partner == u {
                    if c.im != 0.0 {
                        return Err(Error::NonRealSelfConjugate(u * wh + v));
                    }
                } else if c != plane.get(partner, v).conj() {
                    return Err(Error::HermitianPairing { row: u, col: v });
                }
            }
        }
        Ok(plane)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0);
        Self {
            rows,
            cols,
            coeffs: vec![ZERO; rows * half_len(cols)],
        }
    }

    pub fn constant(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0);
        Self {
            rows,
            cols,
            coeffs: vec![Complex64::new(value, 0.0); rows * half_len(cols)],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn half_cols(&self) -> usize {
        half_len(self.cols)
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Complex64 {
        self.coeffs[u * self.half_cols() + v]
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn self_conjugate_columns(&self) -> impl Iterator<Item = usize> {
        let cols = self.cols;
        let nyq = (cols % 2 == 0 && cols > 1).then_some(cols / 2);
        core::iter::once(0).chain(nyq)
    }

    /// Overwrites dependent bins with the conjugate of their representative
    /// and zeroes the imaginary part of real bins.
    pub(crate) fn enforce_hermitian(&mut self) {
        let wh = self.half_cols();
        let cols: Vec<usize> = self.self_conjugate_columns().collect();
        for v in cols {
            for u in 0..self.rows {
                let partner = (self.rows - u) % self.rows;
                if partner == u {
                    self.coeffs[u * wh + v].im = 0.0;
                } else if u < partner {
                    self.coeffs[partner * wh + v] = self.coeffs[u * wh + v].conj();
                }
            }
        }
    }
}

/// Reusable plan for length-`n` real transforms.
#[derive(Debug, Clone)]
pub struct RealFft {
    plan: FftPlan,
}

impl RealFft {
    pub fn new(n: usize) -> Self {
        Self {
            plan: FftPlan::new(n),
        }
    }

    pub fn len(&self) -> usize {
        self.plan.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plan.is_empty()
    }

    pub fn half_len(&self) -> usize {
        half_len(self.len())
    }

    /// Writes the `floor(n/2)+1` forward coefficients of `x` into `out`.
    /// Self-conjugate bins come out exactly real.
    pub fn forward_into(&self, x: &[f64], out: &mut [Complex64]) {
        let n = self.len();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(out.len(), half_len(n));
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.plan.forward(&mut buf);
        out.copy_from_slice(&buf[..half_len(n)]);
        out[0].im = 0.0;
        if n % 2 == 0 {
            out[n / 2].im = 0.0;
        }
    }

    /// Inverse of [`RealFft::forward_into`], including the `1/n` factor.
    /// Imaginary parts of self-conjugate bins are ignored.
    pub fn inverse_into(&self, half: &[Complex64], out: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(half.len(), half_len(n));
        debug_assert_eq!(out.len(), n);
        let mut buf = vec![ZERO; n];
        buf[0] = Complex64::new(half[0].re, 0.0);
        for k in 1..half.len() {
            if 2 * k == n {
                buf[k] = Complex64::new(half[k].re, 0.0);
            } else {
                buf[k] = half[k];
                buf[n - k] = half[k].conj();
            }
        }
        self.plan.inverse(&mut buf);
        let scale = 1.0 / n as f64;
        for (o, z) in out.iter_mut().zip(buf) {
            *o = z.re * scale;
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<HalfSpectrum> {
        check_signal(x, self.len())?;
        let mut out = vec![ZERO; self.half_len()];
        self.forward_into(x, &mut out);
        Ok(HalfSpectrum {
            n: self.len(),
            coeffs: out,
        })
    }

    pub fn inverse(&self, h: &HalfSpectrum) -> Result<Vec<f64>> {
        if h.n != self.len() {
            return Err(shape_err(format!(
                "plan length {} but spectrum of length-{} signal",
                self.len(),
                h.n
            )));
        }
        let mut out = vec![0.0; self.len()];
        self.inverse_into(&h.coeffs, &mut out);
        Ok(out)
    }
}

fn check_signal(x: &[f64], n: usize) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptySignal);
    }
    if x.len() != n {
        return Err(shape_err(format!("expected length {n}, got {}", x.len())));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

/// Reusable plan for `rows x cols` real transforms.
#[derive(Debug, Clone)]
pub struct RealFft2d {
    rows: usize,
    cols: usize,
    row_plan: RealFft,
    col_plan: FftPlan,
}

impl RealFft2d {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_plan: RealFft::new(cols),
            col_plan: FftPlan::new(rows),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn half_cols(&self) -> usize {
        half_len(self.cols)
    }

    /// Number of stored complex bins.
    pub fn bins(&self) -> usize {
        self.rows * self.half_cols()
    }

    /// Raw forward transform into row-major half-plane storage, without
    /// exact Hermitian symmetrisation.
    pub(crate) fn forward_raw(&self, x: &[f64], out: &mut [Complex64]) {
        let (h, w, wh) = (self.rows, self.cols, self.half_cols());
        for r in 0..h {
            self.row_plan
                .forward_into(&x[r * w..(r + 1) * w], &mut out[r * wh..(r + 1) * wh]);
        }
        let mut col = vec![ZERO; h];
        for v in 0..wh {
            for u in 0..h {
                col[u] = out[u * wh + v];
            }
            self.col_plan.forward(&mut col);
            for u in 0..h {
                out[u * wh + v] = col[u];
            }
        }
    }

    /// Inverse transform (with `1/(rows cols)`), treating every stored bin
    /// as independent: the result is
    /// `(1/HW) sum_{u, v in half} c_v Re(Z[u,v] e^{+i theta})` with `c_v = 1`
    /// on self-conjugate columns and 2 elsewhere.
    pub(crate) fn inverse_raw(&self, half: &[Complex64], out: &mut [f64]) {
        let (h, w, wh) = (self.rows, self.cols, self.half_cols());
        let mut tmp = half.to_vec();
        let mut col = vec![ZERO; h];
        let inv_h = 1.0 / h as f64;
        for v in 0..wh {
            for u in 0..h {
                col[u] = tmp[u * wh + v];
            }
            self.col_plan.inverse(&mut col);
            for u in 0..h {
                tmp[u * wh + v] = col[u] * inv_h;
            }
        }
        for r in 0..h {
            self.row_plan
                .inverse_into(&tmp[r * wh..(r + 1) * wh], &mut out[r * w..(r + 1) * w]);
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<HalfPlane> {
        check_signal(x, self.rows * self.cols)?;
        let mut coeffs = vec![ZERO; self.bins()];
        self.forward_raw(x, &mut coeffs);
        let mut plane = HalfPlane {
            rows: self.rows,
            cols: self.cols,
            coeffs,
        };
        plane.enforce_hermitian();
        Ok(plane)
    }

    pub fn inverse(&self, plane: &HalfPlane) -> Result<Vec<f64>> {
        if plane.rows != self.rows || plane.cols != self.cols {
            return Err(shape_err(format!(
                "plan is {}x{} but half-plane is {}x{}",
                self.rows, self.cols, plane.rows, plane.cols
            )));
        }
        let mut out = vec![0.0; self.rows * self.cols];
        self.inverse_raw(&plane.coeffs, &mut out);
        Ok(out)
    }
}

/// Forward real FFT of a length-`n` signal.
pub fn rfft_1d(x: &[f64]) -> Result<HalfSpectrum> {
    if x.is_empty() {
        return Err(Error::EmptySignal);
    }
    RealFft::new(x.len()).forward(x)
}

/// Inverse real FFT (applies `1/n`).
pub fn irfft_1d(h: &HalfSpectrum) -> Result<Vec<f64>> {
    RealFft::new(h.n).inverse(h)
}

/// Forward RFFT_2 of a row-major `rows x cols` grid.
pub fn rfft_2d(x: &[f64], rows: usize, cols: usize) -> Result<HalfPlane> {
    if rows == 0 || cols == 0 {
        return Err(Error::EmptySignal);
    }
    RealFft2d::new(rows, cols).forward(x)
}

/// Inverse RFFT_2 (applies `1/(rows cols)`).
pub fn irfft_2d(plane: &HalfPlane) -> Result<Vec<f64>> {
    RealFft2d::new(plane.rows, plane.cols).inverse(plane)
}

/// Full length-`n` spectrum from its nonredundant half:
/// `out[n-k] = conj(out[k])`.
pub fn hermitian_complete_1d(h: &HalfSpectrum) -> Vec<Complex64> {
    let n = h.n;
    let mut full = vec![ZERO; n];
    full[..h.coeffs.len()].copy_from_slice(&h.coeffs);
    for k in h.coeffs.len()..n {
        full[k] = full[n - k].conj();
    }
    full
}

//! Effective real coordinates of a half-spectrum or half-plane.
//!
//! Order: DC first, then ascending frequency (2D: row-major bin order);
//! a complex bin contributes its real part then its imaginary part, a
//! self-conjugate bin contributes only its real part. Masked bins and the
//! conjugate partners in self-conjugate 2D columns contribute nothing.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::spectrum::{half_len, HalfPlane, HalfSpectrum};
use crate::error::{invalid, shape_err, Error, Result};
use crate::prior::rho_2d;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    /// Self-conjugate bin: one real coordinate.
    Real,
    /// Free complex bin: real and imaginary coordinates.
    Complex,
}

impl SlotKind {
    pub fn width(self) -> usize {
        match self {
            SlotKind::Real => 1,
            SlotKind::Complex => 2,
        }
    }
}

/// One stored bin that owns effective coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    /// Flat index into the half-spectrum / half-plane storage.
    pub bin: usize,
    pub kind: SlotKind,
}

fn check_len(a: &[f64], expected: usize) -> Result<()> {
    if a.len() != expected {
        return Err(Error::CoordinateLength {
            expected,
            got: a.len(),
        });
    }
    Ok(())
}

/// Layout for a length-`n` filter with the lowest `active` bins kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout1d {
    n: usize,
    active: usize,
}

impl Layout1d {
    pub fn new(n: usize, active: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySignal);
        }
        if active < 1 || active > half_len(n) {
            return Err(invalid(format!(
                "active bin count {active} outside [1, {}]",
                half_len(n)
            )));
        }
        Ok(Self { n, active })
    }

    pub fn full(n: usize) -> Self {
        assert!(n > 0);
        Self {
            n,
            active: half_len(n),
        }
    }

    pub fn signal_len(&self) -> usize {
        self.n
    }

    pub fn half_len(&self) -> usize {
        half_len(self.n)
    }

    pub fn active(&self) -> usize {
        self.active
    }

    pub fn slots(&self) -> impl Iterator<Item = Slot> + '_ {
        let n = self.n;
        (0..self.active).map(move |k| Slot {
            bin: k,
            kind: if k == 0 || 2 * k == n {
                SlotKind::Real
            } else {
                SlotKind::Complex
            },
        })
    }

    pub fn d_eff(&self) -> usize {
        self.slots().map(|s| s.kind.width()).sum()
    }

    pub fn pack(&self, h: &HalfSpectrum) -> Result<Vec<f64>> {
        if h.signal_len() != self.n {
            return Err(shape_err(format!(
                "layout for length {} but spectrum of length {}",
                self.n,
                h.signal_len()
            )));
        }
        Ok(pack_slots(self.slots(), h.coeffs(), self.d_eff()))
    }

    pub fn unpack(&self, a: &[f64]) -> Result<HalfSpectrum> {
        check_len(a, self.d_eff())?;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.half_len()];
        self.unpack_into(a, &mut coeffs);
        HalfSpectrum::new(self.n, coeffs)
    }

    /// Writes `T(a)` into `out` (length `half_len`); inactive bins become 0.
    pub fn unpack_into(&self, a: &[f64], out: &mut [Complex64]) {
        out.fill(Complex64::new(0.0, 0.0));
        unpack_slots(self.slots(), a, out);
    }

    /// Adjoint of [`Layout1d::unpack_into`]: accumulates into `grad_a`.
    pub fn unpack_adjoint(&self, grad_half: &[Complex64], grad_a: &mut [f64]) {
        adjoint_slots(self.slots(), grad_half, grad_a);
    }
}

/// Layout for one `rows x cols` half-plane under an optional radial mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout2d {
    rows: usize,
    cols: usize,
    active: Vec<bool>,
    slots: Vec<Slot>,
    /// `(dependent bin, representative bin)` pairs inside active
    /// self-conjugate columns.
    partners: Vec<(usize, usize)>,
}

impl Layout2d {
    /// `radial_cutoff = None` keeps every bin; otherwise a bin is active iff
    /// its wrapped radius is `<= cutoff`.
    pub fn new(rows: usize, cols: usize, radial_cutoff: Option<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptySignal);
        }
        if let Some(c) = radial_cutoff {
            if !(0.0..=1.0).contains(&c) {
                return Err(invalid(format!("radial cutoff {c} outside [0, 1]")));
            }
        }
        let wh = half_len(cols);
        let mut active = vec![true; rows * wh];
        if let Some(cut) = radial_cutoff {
            for u in 0..rows {
                for v in 0..wh {
                    active[u * wh + v] = rho_2d(u, v, rows, cols) <= cut;
                }
            }
        }
        Ok(Self::from_mask(rows, cols, active))
    }

    fn from_mask(rows: usize, cols: usize, active: Vec<bool>) -> Self {
        let wh = half_len(cols);
        let self_conj_col = |v: usize| v == 0 || 2 * v == cols;
        let mut slots = Vec::new();
        let mut partners = Vec::new();
        for u in 0..rows {
            for v in 0..wh {
                let bin = u * wh + v;
                if !active[bin] {
                    continue;
                }
                if self_conj_col(v) {
                    let p = (rows - u) % rows;
                    if p == u {
                        slots.push(Slot { bin, kind: SlotKind::Real });
                    } else if u < p {
                        slots.push(Slot { bin, kind: SlotKind::Complex });
                    } else {
                        partners.push((bin, p * wh + v));
                    }
                } else {
                    slots.push(Slot { bin, kind: SlotKind::Complex });
                }
            }
        }
        Self {
            rows,
            cols,
            active,
            slots,
            partners,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bins(&self) -> usize {
        self.rows * half_len(self.cols)
    }

    pub fn is_active(&self, bin: usize) -> bool {
        self.active[bin]
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn d_eff(&self) -> usize {
        self.slots.iter().map(|s| s.kind.width()).sum()
    }

    pub fn pack(&self, plane: &HalfPlane) -> Result<Vec<f64>> {
        if plane.rows() != self.rows || plane.cols() != self.cols {
            return Err(shape_err(format!(
                "layout for {}x{} but half-plane is {}x{}",
                self.rows,
                self.cols,
                plane.rows(),
                plane.cols()
            )));
        }
        Ok(pack_slots(
            self.slots.iter().copied(),
            plane.coeffs(),
            self.d_eff(),
        ))
    }

    pub fn unpack(&self, a: &[f64]) -> Result<HalfPlane> {
        check_len(a, self.d_eff())?;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.bins()];
        self.unpack_into(a, &mut coeffs);
        HalfPlane::new(self.rows, self.cols, coeffs)
    }

    /// Writes `T(a)` including the conjugate partners; inactive bins are 0.
    pub fn unpack_into(&self, a: &[f64], out: &mut [Complex64]) {
        out.fill(Complex64::new(0.0, 0.0));
        unpack_slots(self.slots.iter().copied(), a, out);
        for &(dep, rep) in &self.partners {
            out[dep] = out[rep].conj();
        }
    }

    /// Adjoint of [`Layout2d::unpack_into`].
    pub fn unpack_adjoint(&self, grad_half: &[Complex64], grad_a: &mut [f64]) {
        if self.partners.is_empty() {
            adjoint_slots(self.slots.iter().copied(), grad_half, grad_a);
            return;
        }
        let mut folded = grad_half.to_vec();
        for &(dep, rep) in &self.partners {
            let g = folded[dep];
            folded[rep] += g.conj();
            folded[dep] = Complex64::new(0.0, 0.0);
        }
        adjoint_slots(self.slots.iter().copied(), &folded, grad_a);
    }
}

fn pack_slots(slots: impl Iterator<Item = Slot>, coeffs: &[Complex64], d: usize) -> Vec<f64> {
    let mut a = Vec::with_capacity(d);
    for s in slots {
        let c = coeffs[s.bin];
        a.push(c.re);
        if s.kind == SlotKind::Complex {
            a.push(c.im);
        }
    }
    a
}

fn unpack_slots(slots: impl Iterator<Item = Slot>, a: &[f64], out: &mut [Complex64]) {
    let mut i = 0;
    for s in slots {
        match s.kind {
            SlotKind::Real => {
                out[s.bin] = Complex64::new(a[i], 0.0);
                i += 1;
            }
            SlotKind::Complex => {
                out[s.bin] = Complex64::new(a[i], a[i + 1]);
                i += 2;
            }
        }
    }
}

fn adjoint_slots(slots: impl Iterator<Item = Slot>, grad: &[Complex64], grad_a: &mut [f64]) {
    let mut i = 0;
    for s in slots {
        let g = grad[s.bin];
        grad_a[i] += g.re;
        i += 1;
        if s.kind == SlotKind::Complex {
            grad_a[i] += g.im;
            i += 1;
        }
    }
}

//! Small dense linear algebra: Cholesky for the `r x r` capacitance matrix,
//! cyclic Jacobi eigenvalues, and largest singular values.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::{standard_normal, StreamRng};

/// Lower Cholesky factor of a row-major SPD matrix.
pub fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::NotPositiveDefinite);
                }
                l[i * n + i] = math::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// `log det A` from its Cholesky factor.
pub fn cholesky_logdet(l: &[f64], n: usize) -> f64 {
    2.0 * (0..n).map(|i| math::ln(l[i * n + i])).sum::<f64>()
}

/// `A^{-1}` from its Cholesky factor (row-major, symmetric).
pub fn cholesky_inverse(l: &[f64], n: usize) -> Vec<f64> {
    let mut inv = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    for c in 0..n {
        col.fill(0.0);
        col[c] = 1.0;
        // L y = e_c
        for i in 0..n {
            let mut s = col[i];
            for k in 0..i {
                s -= l[i * n + k] * col[k];
            }
            col[i] = s / l[i * n + i];
        }
        // L^T x = y
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in i + 1..n {
                s -= l[k * n + i] * col[k];
            }
            col[i] = s / l[i * n + i];
        }
        for r in 0..n {
            inv[r * n + c] = col[r];
        }
    }
    inv
}

/// Eigenvalues of a real symmetric row-major matrix (cyclic Jacobi),
/// unsorted.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    for _sweep in 0..100 {
        let mut off = 0.0;
        let mut diag = 0.0;
        for i in 0..n {
            diag += m[i * n + i] * m[i * n + i];
            for j in 0..n {
                if i != j {
                    off += m[i * n + j] * m[i * n + j];
                }
            }
        }
        if off <= 1e-30 * diag || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + math::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / math::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i * n + i]).collect()
}

/// Largest singular value of a complex row-major `rows x cols` matrix,
/// exactly (Jacobi on the real embedding of the smaller Gram matrix).
pub fn complex_sigma_max(a: &[Complex64], rows: usize, cols: usize) -> f64 {
    debug_assert_eq!(a.len(), rows * cols);
    if rows == 1 || cols == 1 {
        return math::sqrt(a.iter().map(|z| z.norm_sqr()).sum());
    }
    // G = A^H A (cols x cols) or A A^H (rows x rows), Hermitian.
    let (n, gram) = if cols <= rows {
        let mut g = vec![Complex64::new(0.0, 0.0); cols * cols];
        for i in 0..cols {
            for j in 0..cols {
                let mut s = Complex64::new(0.0, 0.0);
                for r in 0..rows {
                    s += a[r * cols + i].conj() * a[r * cols + j];
                }
                g[i * cols + j] = s;
            }
        }
        (cols, g)
    } else {
        let mut g = vec![Complex64::new(0.0, 0.0); rows * rows];
        for i in 0..rows {
            for j in 0..rows {
                let mut s = Complex64::new(0.0, 0.0);
                for c in 0..cols {
                    s += a[i * cols + c] * a[j * cols + c].conj();
                }
                g[i * rows + j] = s;
            }
        }
        (rows, g)
    };
    // [[Re, -Im], [Im, Re]] has each eigenvalue of G twice.
    let m = 2 * n;
    let mut e = vec![0.0; m * m];
    for i in 0..n {
        for j in 0..n {
            let z = gram[i * n + j];
            e[i * m + j] = z.re;
            e[i * m + n + j] = -z.im;
            e[(n + i) * m + j] = z.im;
            e[(n + i) * m + n + j] = z.re;
        }
    }
    let top = symmetric_eigenvalues(&e, m)
        .into_iter()
        .fold(0.0f64, f64::max);
    math::sqrt(top.max(0.0))
}

/// Exact largest singular value of a real row-major matrix.
pub fn real_sigma_max_exact(a: &[f64], rows: usize, cols: usize) -> f64 {
    let small = rows.min(cols);
    let mut g = vec![0.0; small * small];
    for i in 0..small {
        for j in i..small {
            let s: f64 = if cols <= rows {
                (0..rows).map(|r| a[r * cols + i] * a[r * cols + j]).sum()
            } else {
                (0..cols).map(|c| a[i * cols + c] * a[j * cols + c]).sum()
            };
            g[i * small + j] = s;
            g[j * small + i] = s;
        }
    }
    let top = symmetric_eigenvalues(&g, small).into_iter().fold(0.0f64, f64::max);
    math::sqrt(top.max(0.0))
}

/// Outcome of [`dense_spectral_norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub exact: bool,
}

const POWER_ITERS: usize = 50;
const POWER_TOL: f64 = 1e-9;
const EXACT_FALLBACK_DIM: usize = 256;

/// `||W||_2` by power iteration on `W^T W` (50 iterations, relative tolerance
/// 1e-9); if that has not converged and the smaller dimension is at most 256
/// the exact value is computed instead.
pub fn dense_spectral_norm(w: &[f64], rows: usize, cols: usize) -> NormEstimate {
    debug_assert_eq!(w.len(), rows * cols);
    let mut rng = StreamRng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..cols).map(|_| standard_normal(&mut rng)).collect();
    normalize(&mut v);
    let mut u = vec![0.0; rows];
    let mut sigma = 0.0;
    for it in 1..=POWER_ITERS {
        for r in 0..rows {
            u[r] = (0..cols).map(|c| w[r * cols + c] * v[c]).sum();
        }
        for (c, vc) in v.iter_mut().enumerate() {
            *vc = (0..rows).map(|r| w[r * cols + c] * u[r]).sum();
        }
        let norm_sq = normalize(&mut v);
        let next = math::sqrt(math::sqrt(norm_sq));
        if next == 0.0 {
            return NormEstimate { value: 0.0, iterations: it, exact: false };
        }
        if (next - sigma).abs() <= POWER_TOL * next {
            return NormEstimate { value: next, iterations: it, exact: false };
        }
        sigma = next;
    }
    if rows.min(cols) <= EXACT_FALLBACK_DIM {
        NormEstimate {
            value: real_sigma_max_exact(w, rows, cols),
            iterations: POWER_ITERS,
            exact: true,
        }
    } else {
        NormEstimate { value: sigma, iterations: POWER_ITERS, exact: false }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let s: f64 = v.iter().map(|x| x * x).sum();
    if s > 0.0 {
        let inv = 1.0 / math::sqrt(s);
        v.iter_mut().for_each(|x| *x *= inv);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_roundtrip() {
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let l = cholesky(&a, 3).unwrap();
        let inv = cholesky_inverse(&l, 3);
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        let det = 4.0 * (5.0 * 3.0 - 1.0) - 2.0 * (2.0 * 3.0 - 0.6) + 0.6 * (2.0 - 5.0 * 0.6);
        assert!((cholesky_logdet(&l, 3) - math::ln(det)).abs() < 1e-14);
        assert_eq!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn jacobi_diagonal_and_known() {
        let e = symmetric_eigenvalues(&[2.0, 1.0, 1.0, 2.0], 2);
        let (lo, hi) = (e[0].min(e[1]), e[0].max(e[1]));
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 3.0).abs() < 1e-14);
    }

    #[test]
    fn complex_sigma_max_diag() {
        let z = |r: f64, i: f64| Complex64::new(r, i);
        let a = [z(2.0, 0.0), z(0.0, 0.0), z(0.0, 0.0), z(0.0, 0.5)];
        assert!((complex_sigma_max(&a, 2, 2) - 2.0).abs() < 1e-14);
        // rank-one: sigma = |u||v|
        let b = [z(1.0, 1.0), z(2.0, 0.0), z(0.0, 0.0), z(0.0, 0.0), z(3.0, -1.0), z(0.0, 2.0)];
        let dense_fro = b.iter().map(|x| x.norm_sqr()).sum::<f64>();
        let s = complex_sigma_max(&b, 3, 2);
        assert!(s <= math::sqrt(dense_fro) + 1e-12);
    }

    #[test]
    fn power_iteration_matches_exact() {
        let mut rng = StreamRng::seed_from_u64(3);
        let (r, c) = (12, 7);
        let w: Vec<f64> = (0..r * c).map(|_| standard_normal(&mut rng)).collect();
        let est = dense_spectral_norm(&w, r, c);
        let exact = real_sigma_max_exact(&w, r, c);
        assert!((est.value - exact).abs() < 1e-7 * exact);
    }
}

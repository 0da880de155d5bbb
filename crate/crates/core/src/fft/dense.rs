//! Dense operator builders used as brute-force oracles.

use alloc::vec;
use alloc::vec::Vec;

/// Row-major `n x n` circulant matrix with entry `(t, s) = w[(t - s) mod n]`.
pub fn circulant_dense(w: &[f64]) -> Vec<f64> {
    let n = w.len();
    let mut m = vec![0.0; n * n];
    for t in 0..n {
        for s in 0..n {
            m[t * n + s] = w[(t + n - s) % n];
        }
    }
    m
}

/// Row-major `(H W) x (H W)` BCCB matrix of circular 2D convolution with the
/// `rows x cols` kernel `k`: entry `((x,y),(r,s)) = k[(x-r) mod H, (y-s) mod W]`.
pub fn bccb_dense(k: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let n = rows * cols;
    assert_eq!(k.len(), n);
    let mut m = vec![0.0; n * n];
    for x in 0..rows {
        for y in 0..cols {
            for r in 0..rows {
                for s in 0..cols {
                    let kx = (x + rows - r) % rows;
                    let ky = (y + cols - s) % cols;
                    m[(x * cols + y) * n + r * cols + s] = k[kx * cols + ky];
                }
            }
        }
    }
    m
}

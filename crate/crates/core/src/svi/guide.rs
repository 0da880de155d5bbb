//! Variational families.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{invalid, shape_err, Result};
use crate::math;
use crate::rng::{standard_normal, standard_normal_vec};
use crate::svi::kl::{kl_lowrank_diag, LowRankView};

/// Lower bound added after the softplus map for scale parameters.
pub const SCALE_FLOOR: f64 = 1e-6;
pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_RANK: usize = 8;

/// `softplus(raw) + SCALE_FLOOR`.
pub fn positive(raw: f64) -> f64 {
    math::softplus(raw) + SCALE_FLOOR
}

/// Inverse of [`positive`]; values at or below the floor map to a very
/// negative raw value.
pub fn positive_inv(value: f64) -> f64 {
    math::softplus_inv((value - SCALE_FLOOR).max(1e-300))
}

/// `N(mu, U diag(lambda^2) U^T + diag(sigma^2) + eps I)` in constrained form.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankGaussian {
    pub mu: Vec<f64>,
    /// Row-major `dim x rank`.
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
    pub sigma: Vec<f64>,
    pub eps: f64,
}

impl LowRankGaussian {
    pub fn new(mu: Vec<f64>, u: Vec<f64>, lambda: Vec<f64>, sigma: Vec<f64>, eps: f64) -> Result<Self> {
        let (d, r) = (mu.len(), lambda.len());
        if u.len() != d * r || sigma.len() != d {
            return Err(shape_err(alloc::format!(
                "low-rank guide: mu {d}, U {}, lambda {r}, sigma {}",
                u.len(),
                sigma.len()
            )));
        }
        if r > d {
            return Err(invalid("rank exceeds dimension"));
        }
        if !(eps >= 0.0) || sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(invalid("scales and jitter must be nonnegative"));
        }
        Ok(Self { mu, u, lambda, sigma, eps })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    pub fn view(&self) -> LowRankView<'_> {
        LowRankView {
            mu: &self.mu,
            u: &self.u,
            lambda: &self.lambda,
            sigma: &self.sigma,
            eps: self.eps,
        }
    }

    /// `mu + U (lambda * xi) + sigma * zeta`. The jitter only enters the
    /// density, not the sampler.
    pub fn reparameterize(&self, xi: &[f64], zeta: &[f64]) -> Vec<f64> {
        let (d, r) = (self.dim(), self.rank());
        let lx: Vec<f64> = self.lambda.iter().zip(xi).map(|(l, x)| l * x).collect();
        (0..d)
            .map(|i| {
                let low: f64 = (0..r).map(|j| self.u[i * r + j] * lx[j]).sum();
                self.mu[i] + low + self.sigma[i] * zeta[i]
            })
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let xi = standard_normal_vec(rng, self.rank());
        let zeta = standard_normal_vec(rng, self.dim());
        self.reparameterize(&xi, &zeta)
    }

    /// Dense covariance of the sampler, `U diag(lambda^2) U^T + diag(sigma^2)`.
    pub fn sample_covariance(&self) -> Vec<f64> {
        let (d, r) = (self.dim(), self.rank());
        let mut c = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                c[i * d + k] = (0..r)
                    .map(|j| self.u[i * r + j] * self.u[k * r + j] * self.lambda[j] * self.lambda[j])
                    .sum();
            }
            c[i * d + i] += self.sigma[i] * self.sigma[i];
        }
        c
    }

    /// Dense covariance of the density (sampler covariance plus `eps I`).
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim();
        let mut c = self.sample_covariance();
        for i in 0..d {
            c[i * d + i] += self.eps;
        }
        c
    }

    /// Closed-form KL against `N(0, diag(tau_sq))`.
    pub fn kl_to_diag(&self, tau_sq: &[f64]) -> Result<f64> {
        kl_lowrank_diag(&self.view(), tau_sq)
    }
}

/// Unconstrained storage for a [`LowRankGaussian`]: `lambda` and `sigma`
/// pass through [`positive`].
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankParams {
    pub mu: Vec<f64>,
    pub u: Vec<f64>,
    pub lambda_raw: Vec<f64>,
    pub sigma_raw: Vec<f64>,
    pub eps: f64,
}

impl LowRankParams {
    /// Initialisation: `mu` is a prior draw scaled by 0.1, `U` has
    /// `N(0, 1/(d r))` entries, `sigma = 0.05 tau` and
    /// `lambda = 0.05 sqrt(mean tau^2)`.
    pub fn init<R: Rng + ?Sized>(tau_sq: &[f64], rank: usize, eps: f64, rng: &mut R) -> Result<Self> {
        let d = tau_sq.len();
        if d == 0 {
            return Err(invalid("empty guide"));
        }
        let rank = rank.min(d);
        let mu = tau_sq
            .iter()
            .map(|&t| 0.1 * math::sqrt(t) * standard_normal(rng))
            .collect();
        let su = 1.0 / math::sqrt((d * rank.max(1)) as f64);
        let u = (0..d * rank).map(|_| su * standard_normal(rng)).collect();
        let mean_tau = tau_sq.iter().sum::<f64>() / d as f64;
        let lambda_raw = vec![positive_inv(0.05 * math::sqrt(mean_tau)); rank];
        let sigma_raw = tau_sq.iter().map(|&t| positive_inv(0.05 * math::sqrt(t))).collect();
        Ok(Self { mu, u, lambda_raw, sigma_raw, eps })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn rank(&self) -> usize {
        self.lambda_raw.len()
    }

    pub fn constrained(&self) -> LowRankGaussian {
        LowRankGaussian {
            mu: self.mu.clone(),
            u: self.u.clone(),
            lambda: self.lambda_raw.iter().map(|&v| positive(v)).collect(),
            sigma: self.sigma_raw.iter().map(|&v| positive(v)).collect(),
            eps: self.eps,
        }
    }

    pub fn len(&self) -> usize {
        self.mu.len() + self.u.len() + self.lambda_raw.len() + self.sigma_raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.mu);
        out.extend_from_slice(&self.u);
        out.extend_from_slice(&self.lambda_raw);
        out.extend_from_slice(&self.sigma_raw);
    }

    /// Reads blocks in [`LowRankParams::write_flat`] order; returns the
    /// number of values consumed.
    pub fn read_flat(&mut self, src: &[f64]) -> usize {
        let mut off = 0;
        for block in [&mut self.mu, &mut self.u, &mut self.lambda_raw, &mut self.sigma_raw] {
            let n = block.len();
            block.copy_from_slice(&src[off..off + n]);
            off += n;
        }
        off
    }
}

/// Fully factorised Gaussian over one named block of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldGaussian {
    pub mu: Vec<f64>,
    pub sigma_raw: Vec<f64>,
}

impl MeanFieldGaussian {
    pub fn new(mu: Vec<f64>, sigma: f64) -> Self {
        let sigma_raw = vec![positive_inv(sigma); mu.len()];
        Self { mu, sigma_raw }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.sigma_raw.iter().map(|&v| positive(v)).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mu
            .iter()
            .zip(self.sigma())
            .map(|(m, s)| m + s * standard_normal(rng))
            .collect()
    }

    /// `KL(q || N(0, I))`.
    pub fn kl_to_standard(&self) -> f64 {
        self.mu
            .iter()
            .zip(self.sigma())
            .map(|(m, s)| 0.5 * (s * s + m * m - 1.0) - math::ln(s))
            .sum()
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.mu);
        out.extend_from_slice(&self.sigma_raw);
    }

    pub fn read_flat(&mut self, src: &[f64]) -> usize {
        let n = self.mu.len();
        self.mu.copy_from_slice(&src[..n]);
        self.sigma_raw.copy_from_slice(&src[n..2 * n]);
        2 * n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SeedableRng, StreamRng};
    use nalgebra::DMatrix;

    fn random_guide(d: usize, r: usize, rng: &mut StreamRng) -> LowRankGaussian {
        let mu = standard_normal_vec(rng, d);
        let u = standard_normal_vec(rng, d * r).iter().map(|v| 0.5 * v).collect();
        let lambda = standard_normal_vec(rng, r).iter().map(|v| 0.2 + v.abs()).collect();
        let sigma = standard_normal_vec(rng, d).iter().map(|v| 0.1 + 0.5 * v.abs()).collect();
        LowRankGaussian::new(mu, u, lambda, sigma, DEFAULT_EPS).unwrap()
    }

    /// Dense KL with full determinants and inverse (independent oracle).
    pub(crate) fn dense_kl(q: &LowRankGaussian, tau: &[f64]) -> f64 {
        let d = q.dim();
        let sigma = DMatrix::from_row_slice(d, d, &q.covariance());
        let mut tr = 0.0;
        let mut quad = 0.0;
        let mut logdet_p = 0.0;
        for i in 0..d {
            tr += sigma[(i, i)] / tau[i];
            quad += q.mu[i] * q.mu[i] / tau[i];
            logdet_p += tau[i].ln();
        }
        0.5 * (tr + quad - d as f64 + logdet_p - sigma.determinant().ln())
    }

    #[test]
    fn closed_form_matches_dense_oracle() {
        let mut rng = StreamRng::seed_from_u64(21);
        let q = random_guide(8, 3, &mut rng);
        let tau: Vec<f64> = standard_normal_vec(&mut rng, 8).iter().map(|v| 0.3 + v.abs()).collect();
        let (a, b) = (q.kl_to_diag(&tau).unwrap(), dense_kl(&q, &tau));
        assert!((a - b).abs() < 1e-10 * b.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn deterministic_when_scales_vanish() {
        let q = LowRankGaussian::new(vec![1.0, -2.0, 0.5], vec![0.0; 6], vec![1.0, 1.0], vec![0.0; 3], 1e-5).unwrap();
        let mut rng = StreamRng::seed_from_u64(1);
        assert_eq!(q.sample(&mut rng), q.mu);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(LowRankGaussian::new(vec![0.0; 2], vec![0.0; 3], vec![1.0], vec![1.0; 2], 0.0).is_err());
        assert!(LowRankGaussian::new(vec![0.0; 1], vec![0.0; 2], vec![1.0; 2], vec![1.0], 0.0).is_err());
    }

    #[test]
    fn init_scales() {
        let mut rng = StreamRng::seed_from_u64(2);
        let tau = vec![4.0; 50];
        let p = LowRankParams::init(&tau, 8, DEFAULT_EPS, &mut rng).unwrap();
        let q = p.constrained();
        assert!(q.sigma.iter().all(|s| (s - 0.1).abs() < 1e-12));
        assert_eq!(q.rank(), 8);
        let mut flat = Vec::new();
        p.write_flat(&mut flat);
        assert_eq!(flat.len(), p.len());
        let mut back = p.clone();
        back.mu.fill(0.0);
        assert_eq!(back.read_flat(&flat), flat.len());
        assert_eq!(back, p);
    }

    #[test]
    fn positive_roundtrip() {
        for v in [1e-4, 0.05, 1.0, 30.0] {
            assert!((positive(positive_inv(v)) - v).abs() < 1e-12 * v.max(1.0));
        }
    }

    #[test]
    fn mean_field_kl_zero_at_standard_normal() {
        let mut q = MeanFieldGaussian::new(vec![0.0; 4], 1.0);
        assert!(q.kl_to_standard().abs() < 1e-12);
        q.mu[0] = 1.0;
        assert!((q.kl_to_standard() - 0.5).abs() < 1e-9);
    }
}

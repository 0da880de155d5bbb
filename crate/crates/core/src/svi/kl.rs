//! KL between a low-rank + diagonal Gaussian and a zero-mean diagonal one.
//!
//! With `D = diag(sigma^2 + eps)`, `Lambda = diag(lambda)` and
//! `Sigma = U Lambda^2 U^T + D`:
//!
//! ```text
//! KL = 1/2 [ tr(P^-1 Sigma) + mu^T P^-1 mu - d + log det P - log det Sigma ]
//! log det Sigma = sum log D_i + log det(I_r + Lambda U^T D^-1 U Lambda)
//! ```
//!
//! Only `r x r` matrices are factorised; `Sigma^{-1}` is applied through the
//! Woodbury identity when gradients are requested.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_inverse, cholesky_logdet};
use crate::math;

/// Borrowed view of the variational parameters in constrained form.
#[derive(Debug, Clone, Copy)]
pub struct LowRankView<'a> {
    pub mu: &'a [f64],
    /// Row-major `dim x rank`.
    pub u: &'a [f64],
    pub lambda: &'a [f64],
    pub sigma: &'a [f64],
    pub eps: f64,
}

impl LowRankView<'_> {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn rank(&self) -> usize {
        self.lambda.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlGrad {
    pub mu: Vec<f64>,
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
    pub sigma: Vec<f64>,
    pub tau_sq: Vec<f64>,
}

struct Capacitance {
    /// `V = D^{-1} U Lambda`, row-major `d x r`.
    v: Vec<f64>,
    /// Cholesky factor of `M = I + Lambda U^T D^{-1} U Lambda`.
    chol: Vec<f64>,
    logdet_sigma: f64,
}

fn capacitance(q: &LowRankView<'_>) -> Result<Capacitance> {
    let (d, r) = (q.dim(), q.rank());
    let mut v = vec![0.0; d * r];
    let mut logdet_d = 0.0;
    for i in 0..d {
        let di = q.sigma[i] * q.sigma[i] + q.eps;
        logdet_d += math::ln(di);
        for j in 0..r {
            v[i * r + j] = q.u[i * r + j] * q.lambda[j] / di;
        }
    }
    let mut m = vec![0.0; r * r];
    for a in 0..r {
        for b in a..r {
            let mut s = 0.0;
            for i in 0..d {
                s += q.u[i * r + a] * q.lambda[a] * v[i * r + b];
            }
            m[a * r + b] = s;
            m[b * r + a] = s;
        }
        m[a * r + a] += 1.0;
    }
    let chol = cholesky(&m, r).map_err(|_| Error::KlOverflow)?;
    let logdet_sigma = logdet_d + cholesky_logdet(&chol, r);
    Ok(Capacitance {
        v,
        chol,
        logdet_sigma,
    })
}

fn check(q: &LowRankView<'_>, tau_sq: &[f64]) -> Result<()> {
    let (d, r) = (q.dim(), q.rank());
    if q.u.len() != d * r || q.sigma.len() != d || tau_sq.len() != d {
        return Err(Error::Shape(alloc::format!(
            "KL dims: mu {d}, U {}, lambda {r}, sigma {}, tau {}",
            q.u.len(),
            q.sigma.len(),
            tau_sq.len()
        )));
    }
    if tau_sq.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidArgument("prior variances must be positive".into()));
    }
    Ok(())
}

/// Closed-form `KL(q || N(0, diag(tau_sq)))`.
pub fn kl_lowrank_diag(q: &LowRankView<'_>, tau_sq: &[f64]) -> Result<f64> {
    check(q, tau_sq)?;
    let cap = capacitance(q)?;
    let value = kl_value(q, tau_sq, cap.logdet_sigma);
    if !value.is_finite() {
        return Err(Error::KlOverflow);
    }
    Ok(value)
}

fn kl_value(q: &LowRankView<'_>, tau_sq: &[f64], logdet_sigma: f64) -> f64 {
    let (d, r) = (q.dim(), q.rank());
    let mut acc = 0.0;
    for i in 0..d {
        let mut diag = q.sigma[i] * q.sigma[i] + q.eps;
        for j in 0..r {
            let ul = q.u[i * r + j] * q.lambda[j];
            diag += ul * ul;
        }
        acc += (diag + q.mu[i] * q.mu[i]) / tau_sq[i] + math::ln(tau_sq[i]);
    }
    0.5 * (acc - d as f64 - logdet_sigma)
}

/// KL value together with its gradient with respect to every input.
pub fn kl_lowrank_diag_grad(q: &LowRankView<'_>, tau_sq: &[f64]) -> Result<(f64, KlGrad)> {
    check(q, tau_sq)?;
    let (d, r) = (q.dim(), q.rank());
    let cap = capacitance(q)?;
    let value = kl_value(q, tau_sq, cap.logdet_sigma);
    if !value.is_finite() {
        return Err(Error::KlOverflow);
    }
    let m_inv = cholesky_inverse(&cap.chol, r);
    let v = &cap.v;

    // W = V M^{-1}  (d x r)
    let mut w = vec![0.0; d * r];
    for i in 0..d {
        for b in 0..r {
            w[i * r + b] = (0..r).map(|a| v[i * r + a] * m_inv[a * r + b]).sum();
        }
    }
    // diag(Sigma^{-1})_i = 1/D_i - (W V^T)_ii
    // Sigma^{-1} U = D^{-1} U - W (V^T U)
    let mut vtu = vec![0.0; r * r];
    for a in 0..r {
        for b in 0..r {
            vtu[a * r + b] = (0..d).map(|i| v[i * r + a] * q.u[i * r + b]).sum();
        }
    }
    let mut sinv_u = vec![0.0; d * r];
    let mut sinv_diag = vec![0.0; d];
    for i in 0..d {
        let di = q.sigma[i] * q.sigma[i] + q.eps;
        sinv_diag[i] = 1.0 / di - (0..r).map(|a| w[i * r + a] * v[i * r + a]).sum::<f64>();
        for b in 0..r {
            let corr: f64 = (0..r).map(|a| w[i * r + a] * vtu[a * r + b]).sum();
            sinv_u[i * r + b] = q.u[i * r + b] / di - corr;
        }
    }

    let mut g = KlGrad {
        mu: vec![0.0; d],
        u: vec![0.0; d * r],
        lambda: vec![0.0; r],
        sigma: vec![0.0; d],
        tau_sq: vec![0.0; d],
    };
    for i in 0..d {
        let t = tau_sq[i];
        g.mu[i] = q.mu[i] / t;
        g.sigma[i] = q.sigma[i] * (1.0 / t - sinv_diag[i]);
        let mut diag = q.sigma[i] * q.sigma[i] + q.eps;
        for j in 0..r {
            let uij = q.u[i * r + j];
            let l2 = q.lambda[j] * q.lambda[j];
            diag += uij * uij * l2;
            g.u[i * r + j] = l2 * (uij / t - sinv_u[i * r + j]);
        }
        g.tau_sq[i] = 0.5 * (1.0 / t - (diag + q.mu[i] * q.mu[i]) / (t * t));
    }
    for j in 0..r {
        let mut ut_u_over_tau = 0.0;
        let mut ut_sinv_u = 0.0;
        for i in 0..d {
            let uij = q.u[i * r + j];
            ut_u_over_tau += uij * uij / tau_sq[i];
            ut_sinv_u += uij * sinv_u[i * r + j];
        }
        g.lambda[j] = q.lambda[j] * (ut_u_over_tau - ut_sinv_u);
    }
    Ok((value, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{standard_normal, SeedableRng, StreamRng};

    fn random_case(d: usize, r: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = StreamRng::seed_from_u64(seed);
        let mut n = || standard_normal(&mut rng);
        let mu = (0..d).map(|_| n()).collect();
        let u = (0..d * r).map(|_| 0.5 * n()).collect();
        let lam = (0..r).map(|_| 0.3 + n().abs()).collect();
        let sig = (0..d).map(|_| 0.2 + 0.5 * n().abs()).collect();
        let tau = (0..d).map(|_| 0.1 + n().abs()).collect();
        (mu, u, lam, sig, tau)
    }

    #[test]
    fn kl_zero_at_prior() {
        let tau = [1.0, 0.5, 0.5, 2.0];
        let eps = 1e-5;
        let sigma: Vec<f64> = tau.iter().map(|t: &f64| math::sqrt(t - eps)).collect();
        let q = LowRankView {
            mu: &[0.0; 4],
            u: &[0.0; 8],
            lambda: &[0.7, 0.1],
            sigma: &sigma,
            eps,
        };
        assert!(kl_lowrank_diag(&q, &tau).unwrap().abs() < 1e-12);
    }

    #[test]
    fn kl_scalar_closed_form() {
        let (mu, s, t) = (0.3, 0.8, 1.7);
        let q = LowRankView { mu: &[mu], u: &[0.0], lambda: &[1.0], sigma: &[s], eps: 0.0 };
        let kl = kl_lowrank_diag(&q, &[t]).unwrap();
        let expect = 0.5 * (s * s / t + mu * mu / t - 1.0 + math::ln(t / (s * s)));
        assert!((kl - expect).abs() < 1e-14);
    }

    #[test]
    fn kl_gradient_matches_central_differences() {
        let (d, r) = (7, 3);
        let (mu, u, lam, sig, tau) = random_case(d, r, 11);
        let eps = 1e-5;
        let f = |mu: &[f64], u: &[f64], lam: &[f64], sig: &[f64], tau: &[f64]| {
            kl_lowrank_diag(&LowRankView { mu, u, lambda: lam, sigma: sig, eps }, tau).unwrap()
        };
        let (_, g) = kl_lowrank_diag_grad(
            &LowRankView { mu: &mu, u: &u, lambda: &lam, sigma: &sig, eps },
            &tau,
        )
        .unwrap();
        let h = 1e-5;
        let fd = |which: usize, i: usize| {
            let mut args = [mu.clone(), u.clone(), lam.clone(), sig.clone(), tau.clone()];
            args[which][i] += h;
            let up = f(&args[0], &args[1], &args[2], &args[3], &args[4]);
            args[which][i] -= 2.0 * h;
            let dn = f(&args[0], &args[1], &args[2], &args[3], &args[4]);
            (up - dn) / (2.0 * h)
        };
        let groups = [&g.mu, &g.u, &g.lambda, &g.sigma, &g.tau_sq];
        for (w, grad) in groups.iter().enumerate() {
            for i in 0..grad.len() {
                let num = fd(w, i);
                let err = (num - grad[i]).abs() / num.abs().max(1e-3);
                assert!(err < 1e-6, "group {w} idx {i}: fd {num} vs {}", grad[i]);
            }
        }
    }
}

//! Adam on a flat parameter vector (minimisation).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One Adam update of `params` along `-grads`.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, hyper: &AdamHyper) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(shape_err(alloc::format!(
            "adam: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let t = state.t as f64;
    let bc1 = 1.0 - math::powf(hyper.beta1, t);
    let bc2 = 1.0 - math::powf(hyper.beta2, t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= hyper.lr * m_hat / (math::sqrt(v_hat) + hyper.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState { m: vec![0.5, 0.5], v: vec![0.25, 0.25], t: 3 };
        let h = AdamHyper::default();
        let before = p.clone();
        adam_step(&mut p, &[0.0, 0.0], &mut s, &h).unwrap();
        // m decays but the step is nonzero while m is; with m = 0 the step is 0.
        assert!((s.m[0] - 0.45).abs() < 1e-15);
        assert!((s.v[0] - 0.25 * 0.999).abs() < 1e-15);
        let mut p2 = before.clone();
        let mut s2 = AdamState::new(2);
        adam_step(&mut p2, &[0.0, 0.0], &mut s2, &h).unwrap();
        assert_eq!(p2, before);
        assert_ne!(p, before);
    }

    #[test]
    fn quadratic_converges() {
        let mut x = vec![5.0];
        let mut s = AdamState::new(1);
        let h = AdamHyper::default();
        let target = 1.7;
        let mut steps = 0;
        while steps < 5000 {
            let g = 2.0 * (x[0] - target);
            adam_step(&mut x, &[g], &mut s, &h).unwrap();
            steps += 1;
        }
        assert!((x[0] - target).abs() < 1e-6, "x = {}", x[0]);
    }

    #[test]
    fn zero_betas_give_normalised_step() {
        let h = AdamHyper { lr: 0.1, beta1: 0.0, beta2: 0.0, eps: 1e-8 };
        let mut p = vec![0.0, 0.0];
        let mut s = AdamState::new(2);
        let g = [3.0, -0.5];
        adam_step(&mut p, &g, &mut s, &h).unwrap();
        for i in 0..2 {
            let expect = -0.1 * g[i] / (g[i].abs() + 1e-8);
            assert!((p[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn length_mismatch_errors() {
        let mut s = AdamState::new(2);
        assert!(adam_step(&mut [0.0; 2], &[0.0], &mut s, &AdamHyper::default()).is_err());
    }
}

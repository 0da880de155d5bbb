//! Minibatch SVI loop.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{invalid, shape_err, Error, Result};
use crate::rng::StreamRng;
use crate::svi::adam::{adam_step, AdamHyper, AdamState};
use crate::svi::model::{Batch, Guides, Model, Noise};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub n_mc: usize,
    pub adam: AdamHyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 128,
            n_mc: 1,
            adam: AdamHyper::default(),
        }
    }
}

/// Row-major training inputs with labels.
#[derive(Debug, Clone, Copy)]
pub struct Dataset<'a> {
    pub x: &'a [f64],
    pub labels: &'a [usize],
}

impl Dataset<'_> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Complete optimisation state; restoring every field resumes a run
/// bit-for-bit.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub guides: Guides,
    pub adam: AdamState,
    pub rng: StreamRng,
    pub step: u64,
    /// ELBO estimate recorded at every completed step.
    pub trace: Vec<f64>,
}

impl Trainer {
    /// Draws initial guides from `rng`, which then drives the whole run.
    pub fn new(model: Model, mut rng: StreamRng) -> Result<Self> {
        let guides = model.init_guides(&mut rng)?;
        let adam = AdamState::new(guides.len());
        Ok(Self {
            model,
            guides,
            adam,
            rng,
            step: 0,
            trace: Vec::new(),
        })
    }

    fn check(&self, data: &Dataset<'_>, cfg: &TrainConfig) -> Result<()> {
        if data.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if data.x.len() != data.len() * self.model.input_dim() {
            return Err(shape_err("dataset inputs do not match the model input dimension"));
        }
        if cfg.batch_size == 0 || cfg.n_mc == 0 {
            return Err(invalid("batch size and n_mc must be positive"));
        }
        Ok(())
    }

    /// One SVI step: draw a minibatch without replacement, draw noise,
    /// evaluate the ELBO and its gradient, and take an Adam ascent step.
    pub fn step(&mut self, data: &Dataset<'_>, cfg: &TrainConfig) -> Result<f64> {
        self.check(data, cfg)?;
        let n = data.len();
        let b = cfg.batch_size.min(n);
        let dim = self.model.input_dim();
        let mut idx: Vec<usize> = (0..n).collect();
        let (chosen, _) = idx.partial_shuffle(&mut self.rng, b);
        let mut x = Vec::with_capacity(b * dim);
        let mut labels = Vec::with_capacity(b);
        for &i in chosen.iter() {
            x.extend_from_slice(&data.x[i * dim..(i + 1) * dim]);
            labels.push(data.labels[i]);
        }
        let noises: Vec<Noise> = (0..cfg.n_mc).map(|_| Noise::draw(&self.guides, &mut self.rng)).collect();
        let batch = Batch { x: &x, labels: &labels };
        let step = self.step as usize;
        let (terms, grad) = match self.model.elbo_grad_with_noise(&self.guides, &batch, n, &noises) {
            Ok(v) => v,
            Err(Error::KlOverflow) => return Err(self.diverged(step, f64::NAN)),
            Err(e) => return Err(e),
        };
        if !terms.elbo.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(self.diverged(step, terms.elbo));
        }
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut flat = self.guides.to_flat();
        adam_step(&mut flat, &neg, &mut self.adam, &cfg.adam)?;
        self.guides.set_flat(&flat)?;
        self.step += 1;
        self.trace.push(terms.elbo);
        Ok(terms.elbo)
    }

    fn diverged(&self, step: usize, value: f64) -> Error {
        let mut trace = self.trace.clone();
        trace.push(value);
        Error::Diverged { step, trace }
    }

    /// Runs `cfg.steps` steps.
    pub fn run(&mut self, data: &Dataset<'_>, cfg: &TrainConfig) -> Result<()> {
        self.check(data, cfg)?;
        for _ in 0..cfg.steps {
            self.step(data, cfg)?;
        }
        Ok(())
    }
}

/// Two-class signals `x = s * template + noise` with `s = +-1` and a
/// smooth template; linearly separable at `noise <= 0.3`.
pub fn synthetic_separable<R: rand::Rng + ?Sized>(
    n: usize,
    dim: usize,
    noise: f64,
    rng: &mut R,
) -> (Vec<f64>, Vec<usize>) {
    let template: Vec<f64> = (0..dim)
        .map(|t| {
            let (s, c) = crate::math::sin_cos(2.0 * core::f64::consts::PI * t as f64 / dim as f64);
            0.8 * c + 0.4 * s
        })
        .collect();
    let mut x = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % 2;
        let s = if y == 0 { -1.0 } else { 1.0 };
        for &tv in &template {
            x.push(s * tv + noise * crate::rng::standard_normal(rng));
        }
        labels.push(y);
    }
    (x, labels)
}

//! Model specifications, guide collections and the ELBO graph.
//!
//! Supported architectures are `spectral layer -> tanh -> linear -> softmax`
//! in 1D (spectral circulant over a length-`d` input) and 2D (spectral BCCB
//! from one input channel to `channels` feature maps, flattened).

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{invalid, shape_err, Error, Result};
use crate::fft::{half_len, Layout1d, Layout2d, RealFft, RealFft2d, SlotKind};
use crate::layers::{LayerSpec, SpectralBccb2d, SpectralCirculant1d};
use crate::math;
use crate::prior::{envelope, radius_1d, rho_2d};
use crate::rng::standard_normal_vec;
use crate::svi::guide::{LowRankParams, MeanFieldGaussian, SCALE_FLOOR};
use crate::tape::{Op, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub enum Architecture {
    /// `active = None` keeps the full half-spectrum.
    Spectral1d { dim: usize, active: Option<usize> },
    /// `radial_cutoff = None` keeps every bin.
    Bccb2d { rows: usize, cols: usize, channels: usize, radial_cutoff: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaMode {
    Fixed(f64),
    /// `alpha = softplus(alpha_z)` with a mean-field guide on `alpha_z`.
    Learned { init: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub sigma0_sq: f64,
    pub alpha: AlphaMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub arch: Architecture,
    pub classes: usize,
    pub prior: PriorSpec,
    pub rank: usize,
    pub eps: f64,
    /// Spectral-layer bias (scalar in 1D, per output channel in 2D).
    pub layer_bias: bool,
}

#[derive(Debug, Clone)]
enum Kind {
    D1 { layout: Layout1d, plan: Arc<RealFft> },
    D2 { layout: Arc<Layout2d>, plan: Arc<RealFft2d>, channels: usize },
}

/// A validated [`ModelSpec`] with precomputed layouts and plans.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    kind: Kind,
    /// Radius and variance weight (1 or 1/2) per spectral coordinate.
    rho: Arc<[f64]>,
    weight: Arc<[f64]>,
}

fn slot_weights(kind: SlotKind, rho: f64, rhos: &mut Vec<f64>, weights: &mut Vec<f64>) {
    match kind {
        SlotKind::Real => {
            rhos.push(rho);
            weights.push(1.0);
        }
        SlotKind::Complex => {
            rhos.extend([rho, rho]);
            weights.extend([0.5, 0.5]);
        }
    }
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        if spec.classes < 2 {
            return Err(invalid("at least two classes are required"));
        }
        if !(spec.prior.sigma0_sq > 0.0) {
            return Err(invalid("sigma0^2 must be positive for training"));
        }
        match spec.prior.alpha {
            AlphaMode::Fixed(a) | AlphaMode::Learned { init: a } if !(a >= 0.0) => {
                return Err(invalid("alpha must be nonnegative"));
            }
            _ => {}
        }
        if spec.rank == 0 {
            return Err(invalid("rank must be at least 1"));
        }
        let (mut rhos, mut weights) = (Vec::new(), Vec::new());
        let kind = match spec.arch {
            Architecture::Spectral1d { dim, active } => {
                let layout = Layout1d::new(dim, active.unwrap_or(half_len(dim)))?;
                for s in layout.slots() {
                    slot_weights(s.kind, radius_1d(s.bin, dim), &mut rhos, &mut weights);
                }
                Kind::D1 { layout, plan: Arc::new(RealFft::new(dim)) }
            }
            Architecture::Bccb2d { rows, cols, channels, radial_cutoff } => {
                if channels == 0 {
                    return Err(invalid("channel count must be positive"));
                }
                let layout = Layout2d::new(rows, cols, radial_cutoff)?;
                let wh = half_len(cols);
                for _ in 0..channels {
                    for s in layout.slots() {
                        let rho = rho_2d(s.bin / wh, s.bin % wh, rows, cols);
                        slot_weights(s.kind, rho, &mut rhos, &mut weights);
                    }
                }
                Kind::D2 {
                    layout: Arc::new(layout),
                    plan: Arc::new(RealFft2d::new(rows, cols)),
                    channels,
                }
            }
        };
        Ok(Self {
            spec,
            kind,
            rho: rhos.into(),
            weight: weights.into(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Length of one input example.
    pub fn input_dim(&self) -> usize {
        match &self.kind {
            Kind::D1 { layout, .. } => layout.signal_len(),
            Kind::D2 { layout, .. } => layout.rows() * layout.cols(),
        }
    }

    /// Width of the hidden representation fed to the linear head.
    pub fn features(&self) -> usize {
        match &self.kind {
            Kind::D1 { layout, .. } => layout.signal_len(),
            Kind::D2 { layout, channels, .. } => channels * layout.rows() * layout.cols(),
        }
    }

    pub fn classes(&self) -> usize {
        self.spec.classes
    }

    /// Number of spectral effective coordinates.
    pub fn spectral_dim(&self) -> usize {
        self.rho.len()
    }

    fn layer_bias_len(&self) -> usize {
        match (&self.kind, self.spec.layer_bias) {
            (_, false) => 0,
            (Kind::D1 { .. }, true) => 1,
            (Kind::D2 { channels, .. }, true) => *channels,
        }
    }

    /// Prior variances of the spectral coordinates at slope `alpha`.
    pub fn prior_variances(&self, alpha: f64) -> Vec<f64> {
        self.rho
            .iter()
            .zip(self.weight.iter())
            .map(|(&r, &w)| w * envelope(self.spec.prior.sigma0_sq, alpha, r))
            .collect()
    }

    fn alpha_init(&self) -> f64 {
        match self.spec.prior.alpha {
            AlphaMode::Fixed(a) | AlphaMode::Learned { init: a } => a,
        }
    }

    /// Layer list for parameter accounting.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let spectral = match (&self.kind, &self.spec.arch) {
            (Kind::D1 { layout, .. }, _) => LayerSpec::SpectralCirculant1d {
                d: layout.signal_len(),
                active: Some(layout.active()),
                bias: self.spec.layer_bias,
            },
            (Kind::D2 { layout, channels, .. }, Architecture::Bccb2d { radial_cutoff, .. }) => {
                LayerSpec::SpectralBccb2d {
                    cout: *channels,
                    cin: 1,
                    rows: layout.rows(),
                    cols: layout.cols(),
                    radial_cutoff: *radial_cutoff,
                    bias: self.spec.layer_bias,
                }
            }
            _ => unreachable!("kind follows architecture"),
        };
        vec![
            spectral,
            LayerSpec::Dense {
                inputs: self.features(),
                outputs: self.classes(),
                bias: true,
            },
        ]
    }

    /// Initial guides: see [`LowRankParams::init`]; head weights start at
    /// `N(0, 1/F)` means with scale `0.1/sqrt(F)`, biases at zero with
    /// scale 0.01, `alpha_z` at `softplus^-1(alpha_init)` with scale 0.1.
    pub fn init_guides<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Guides> {
        let tau = self.prior_variances(self.alpha_init());
        let spectral = LowRankParams::init(&tau, self.spec.rank, self.spec.eps, rng)?;
        let f = self.features();
        let c = self.classes();
        let s = 1.0 / math::sqrt(f as f64);
        let w_mu = standard_normal_vec(rng, f * c).into_iter().map(|v| v * s).collect();
        let alpha_z = match self.spec.prior.alpha {
            AlphaMode::Fixed(_) => None,
            AlphaMode::Learned { init } => Some(MeanFieldGaussian::new(
                vec![math::softplus_inv(init.max(1e-6))],
                0.1,
            )),
        };
        let nb = self.layer_bias_len();
        Ok(Guides {
            spectral,
            layer_bias: (nb > 0).then(|| MeanFieldGaussian::new(vec![0.0; nb], 0.01)),
            head_w: MeanFieldGaussian::new(w_mu, 0.1 * s),
            head_b: MeanFieldGaussian::new(vec![0.0; c], 0.01),
            alpha_z,
        })
    }

    /// Builds the deterministic network for given parameter values.
    pub fn network(&self, p: &PointParams) -> Result<Network> {
        let layer = match &self.kind {
            Kind::D1 { layout, .. } => {
                let bias = p.layer_bias.as_ref().map(|b| b[0]);
                SpectralLayer::Circulant(SpectralCirculant1d::from_coords(*layout, &p.spectral, bias)?)
            }
            Kind::D2 { layout, channels, .. } => SpectralLayer::Bccb(SpectralBccb2d::from_coords(
                *channels,
                1,
                layout.clone(),
                &p.spectral,
                p.layer_bias.clone(),
            )?),
        };
        Ok(Network {
            layer,
            head_w: p.head_w.clone(),
            head_b: p.head_b.clone(),
            classes: self.classes(),
        })
    }

    fn check_batch(&self, batch: &Batch<'_>) -> Result<usize> {
        let b = batch.labels.len();
        if b == 0 {
            return Err(Error::EmptyBatch);
        }
        if batch.x.len() != b * self.input_dim() {
            return Err(shape_err(alloc::format!(
                "batch of {b} labels needs {} inputs, got {}",
                b * self.input_dim(),
                batch.x.len()
            )));
        }
        if let Some(&y) = batch.labels.iter().find(|&&y| y >= self.classes()) {
            return Err(Error::OutOfRange { index: y, len: self.classes() });
        }
        Ok(b)
    }
}

/// Guides for every site of a [`Model`].
#[derive(Debug, Clone, PartialEq)]
pub struct Guides {
    pub spectral: LowRankParams,
    pub layer_bias: Option<MeanFieldGaussian>,
    pub head_w: MeanFieldGaussian,
    pub head_b: MeanFieldGaussian,
    pub alpha_z: Option<MeanFieldGaussian>,
}

impl Guides {
    fn base_sites(&self) -> impl Iterator<Item = &MeanFieldGaussian> {
        self.layer_bias
            .iter()
            .chain([&self.head_w, &self.head_b])
            .chain(self.alpha_z.iter())
    }

    fn base_sites_mut(&mut self) -> impl Iterator<Item = &mut MeanFieldGaussian> {
        self.layer_bias
            .iter_mut()
            .chain([&mut self.head_w, &mut self.head_b])
            .chain(self.alpha_z.iter_mut())
    }

    /// Flat layout: spectral `(mu, U, lambda_raw, sigma_raw)`, then each
    /// mean-field site `(mu, sigma_raw)` in the order layer bias, head
    /// weights, head bias, `alpha_z`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        self.spectral.write_flat(&mut out);
        for s in self.base_sites() {
            s.write_flat(&mut out);
        }
        out
    }

    /// Named block lengths in [`Guides::to_flat`] order.
    pub fn blocks(&self) -> Vec<(&'static str, usize)> {
        let (d, r) = (self.spectral.dim(), self.spectral.rank());
        let mut out = vec![
            ("spectral.mu", d),
            ("spectral.u", d * r),
            ("spectral.lambda_raw", r),
            ("spectral.sigma_raw", d),
        ];
        if let Some(s) = &self.layer_bias {
            out.extend([("layer_bias.mu", s.len()), ("layer_bias.sigma_raw", s.len())]);
        }
        out.extend([
            ("head_w.mu", self.head_w.len()),
            ("head_w.sigma_raw", self.head_w.len()),
            ("head_b.mu", self.head_b.len()),
            ("head_b.sigma_raw", self.head_b.len()),
        ]);
        if let Some(s) = &self.alpha_z {
            out.extend([("alpha_z.mu", s.len()), ("alpha_z.sigma_raw", s.len())]);
        }
        out
    }

    pub fn set_flat(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.len() {
            return Err(Error::CoordinateLength { expected: self.len(), got: src.len() });
        }
        let mut off = self.spectral.read_flat(src);
        for s in self.base_sites_mut() {
            off += s.read_flat(&src[off..]);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.spectral.len() + self.base_sites().map(|s| 2 * s.len()).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sum of the closed-form mean-field KLs against `N(0, 1)`.
    pub fn base_kl(&self) -> f64 {
        self.base_sites().map(MeanFieldGaussian::kl_to_standard).sum()
    }

    /// Posterior means.
    pub fn mean(&self) -> PointParams {
        PointParams {
            spectral: self.spectral.mu.clone(),
            layer_bias: self.layer_bias.as_ref().map(|s| s.mu.clone()),
            head_w: self.head_w.mu.clone(),
            head_b: self.head_b.mu.clone(),
            alpha_z: self.alpha_z.as_ref().map(|s| s.mu[0]),
        }
    }

    /// One posterior draw of every parameter.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PointParams {
        self.realise(&Noise::draw(self, rng))
    }

    /// Parameters for explicit standard-normal noise.
    pub fn realise(&self, noise: &Noise) -> PointParams {
        let mf = |s: &MeanFieldGaussian, z: &[f64]| -> Vec<f64> {
            s.mu.iter().zip(s.sigma()).zip(z).map(|((m, sg), e)| m + sg * e).collect()
        };
        PointParams {
            spectral: self.spectral.constrained().reparameterize(&noise.xi, &noise.zeta),
            layer_bias: self.layer_bias.as_ref().map(|s| mf(s, &noise.layer_bias)),
            head_w: mf(&self.head_w, &noise.head_w),
            head_b: mf(&self.head_b, &noise.head_b),
            alpha_z: self.alpha_z.as_ref().map(|s| mf(s, &noise.alpha_z)[0]),
        }
    }
}

/// Concrete values for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct PointParams {
    pub spectral: Vec<f64>,
    pub layer_bias: Option<Vec<f64>>,
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
    pub alpha_z: Option<f64>,
}

/// Standard-normal noise for one reparameterised draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    pub xi: Vec<f64>,
    pub zeta: Vec<f64>,
    pub layer_bias: Vec<f64>,
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
    pub alpha_z: Vec<f64>,
}

impl Noise {
    pub fn draw<R: Rng + ?Sized>(g: &Guides, rng: &mut R) -> Self {
        let len = |s: &Option<MeanFieldGaussian>| s.as_ref().map_or(0, MeanFieldGaussian::len);
        Self {
            xi: standard_normal_vec(rng, g.spectral.rank()),
            zeta: standard_normal_vec(rng, g.spectral.dim()),
            layer_bias: standard_normal_vec(rng, len(&g.layer_bias)),
            head_w: standard_normal_vec(rng, g.head_w.len()),
            head_b: standard_normal_vec(rng, g.head_b.len()),
            alpha_z: standard_normal_vec(rng, len(&g.alpha_z)),
        }
    }

    /// All-zero noise: every draw sits at the guide means.
    pub fn zeros(g: &Guides) -> Self {
        let len = |s: &Option<MeanFieldGaussian>| s.as_ref().map_or(0, MeanFieldGaussian::len);
        Self {
            xi: vec![0.0; g.spectral.rank()],
            zeta: vec![0.0; g.spectral.dim()],
            layer_bias: vec![0.0; len(&g.layer_bias)],
            head_w: vec![0.0; g.head_w.len()],
            head_b: vec![0.0; g.head_b.len()],
            alpha_z: vec![0.0; len(&g.alpha_z)],
        }
    }
}

/// Row-major inputs with one label per row.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub x: &'a [f64],
    pub labels: &'a [usize],
}

/// Components of an ELBO evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms {
    pub elbo: f64,
    /// Monte-Carlo mean of the dataset-scaled log-likelihood.
    pub log_lik: f64,
    /// Monte-Carlo mean of the spectral KL (exact when `alpha` is fixed).
    pub kl_spectral: f64,
    pub kl_base: f64,
}

struct MfVars {
    mu: Var,
    raw: Var,
    sigma: Var,
    len: usize,
}

fn mf_vars(t: &mut Tape, s: &MeanFieldGaussian) -> Result<MfVars> {
    let mu = t.leaf(s.mu.clone());
    let raw = t.leaf(s.sigma_raw.clone());
    let sp = t.softplus(raw)?;
    let sigma = t.affine(sp, 1.0, SCALE_FLOOR)?;
    Ok(MfVars { mu, raw, sigma, len: s.len() })
}

fn mf_sample(t: &mut Tape, v: &MfVars, z: &[f64]) -> Result<Var> {
    let zc = t.constant(z.to_vec());
    let sz = t.mul(v.sigma, zc)?;
    t.add(v.mu, sz)
}

fn mf_kl(t: &mut Tape, v: &MfVars) -> Result<Var> {
    let u = t.constant(Vec::new());
    let l = t.constant(Vec::new());
    let ones = t.constant(vec![1.0; v.len]);
    t.record(Op::KlLowRank { dim: v.len, rank: 0, eps: 0.0 }, &[v.mu, u, l, v.sigma, ones])
}

/// Leaves of the guide parameters in [`Guides::to_flat`] order.
fn flat_leaves(t: &Tape, leaves: &[Var]) -> usize {
    leaves.iter().map(|&v| t.value(v).len()).sum()
}

impl Model {
    /// Records the ELBO for `batch` on `tape`, averaging the
    /// likelihood and spectral KL over `noises`. Returns the root, the
    /// guide leaves in flat order, and the terms.
    fn record_elbo(
        &self,
        tape: &mut Tape,
        guides: &Guides,
        batch: &Batch<'_>,
        dataset_size: usize,
        noises: &[Noise],
    ) -> Result<(Var, Vec<Var>, ElboTerms)> {
        let b = self.check_batch(batch)?;
        if noises.is_empty() {
            return Err(invalid("at least one Monte-Carlo sample is required"));
        }
        let (d, r) = (guides.spectral.dim(), guides.spectral.rank());
        if d != self.spectral_dim() {
            return Err(Error::CoordinateLength { expected: self.spectral_dim(), got: d });
        }
        let c = self.classes();
        let feats = self.features();

        let mu = tape.leaf(guides.spectral.mu.clone());
        let u = tape.leaf(guides.spectral.u.clone());
        let lam_raw = tape.leaf(guides.spectral.lambda_raw.clone());
        let sig_raw = tape.leaf(guides.spectral.sigma_raw.clone());
        let mut leaves = vec![mu, u, lam_raw, sig_raw];
        let lam = {
            let s = tape.softplus(lam_raw)?;
            tape.affine(s, 1.0, SCALE_FLOOR)?
        };
        let sig = {
            let s = tape.softplus(sig_raw)?;
            tape.affine(s, 1.0, SCALE_FLOOR)?
        };
        let mut base = Vec::new();
        for s in guides.base_sites() {
            let v = mf_vars(tape, s)?;
            leaves.extend([v.mu, v.raw]);
            base.push(v);
        }
        let mut it = base.iter();
        let bias_v = guides.layer_bias.as_ref().map(|_| it.next().unwrap());
        let w_v = it.next().unwrap();
        let hb_v = it.next().unwrap();
        let alpha_v = guides.alpha_z.as_ref().map(|_| it.next().unwrap());

        let onehot = {
            let mut oh = vec![0.0; b * c];
            for (i, &y) in batch.labels.iter().enumerate() {
                oh[i * c + y] = 1.0;
            }
            tape.constant(oh)
        };
        let xhat = match &self.kind {
            Kind::D1 { plan, .. } => {
                let x = tape.constant(batch.x.to_vec());
                tape.record(Op::Rfft { plan: plan.clone(), batch: b }, &[x])?
            }
            Kind::D2 { plan, .. } => {
                let x = tape.constant(batch.x.to_vec());
                tape.record(Op::Rfft2 { plan: plan.clone(), batch: b }, &[x])?
            }
        };
        let fixed_tau = match self.spec.prior.alpha {
            AlphaMode::Fixed(a) => Some(tape.constant(self.prior_variances(a))),
            AlphaMode::Learned { .. } => None,
        };

        let mut terms = Vec::with_capacity(noises.len());
        let (mut ll_sum, mut kl_sum) = (0.0, 0.0);
        for noise in noises {
            // a = mu + U (lambda * xi) + sigma * zeta
            let xi = tape.constant(noise.xi.clone());
            let lx = tape.mul(lam, xi)?;
            let ulx = tape.matmul(u, lx, d, r, 1)?;
            let zeta = tape.constant(noise.zeta.clone());
            let sz = tape.mul(sig, zeta)?;
            let a0 = tape.add(mu, ulx)?;
            let a = tape.add(a0, sz)?;

            let hidden = match &self.kind {
                Kind::D1 { layout, plan } => {
                    let kh = layout.half_len();
                    let h = tape.record(Op::Unpack1d { layout: *layout }, &[a])?;
                    let yh = tape.record(Op::ChannelMix { cout: 1, cin: 1, bins: kh, batch: b }, &[h, xhat])?;
                    let y = tape.record(Op::Irfft { plan: plan.clone(), batch: b }, &[yh])?;
                    match bias_v {
                        Some(bv) => {
                            let bs = mf_sample(tape, bv, &noise.layer_bias)?;
                            tape.record(Op::BroadcastAdd { outer: b * feats, mid: 1, inner: 1 }, &[y, bs])?
                        }
                        None => y,
                    }
                }
                Kind::D2 { layout, plan, channels } => {
                    let bins = plan.bins();
                    let k = tape.record(Op::Unpack2d { layout: layout.clone(), planes: *channels }, &[a])?;
                    let yh = tape.record(
                        Op::ChannelMix { cout: *channels, cin: 1, bins, batch: b },
                        &[k, xhat],
                    )?;
                    let y = tape.record(Op::Irfft2 { plan: plan.clone(), batch: b * channels }, &[yh])?;
                    match bias_v {
                        Some(bv) => {
                            let bs = mf_sample(tape, bv, &noise.layer_bias)?;
                            let hw = layout.rows() * layout.cols();
                            tape.record(Op::BroadcastAdd { outer: b, mid: *channels, inner: hw }, &[y, bs])?
                        }
                        None => y,
                    }
                }
            };
            let z = tape.tanh(hidden)?;
            let w = mf_sample(tape, w_v, &noise.head_w)?;
            let logits0 = tape.matmul(z, w, b, feats, c)?;
            let hb = mf_sample(tape, hb_v, &noise.head_b)?;
            let logits = tape.record(Op::BroadcastAdd { outer: b, mid: c, inner: 1 }, &[logits0, hb])?;
            let lp = tape.record(Op::LogSoftmax { cols: c }, &[logits])?;
            let picked = tape.mul(lp, onehot)?;
            let ll = tape.sum(picked)?;
            let ll = tape.affine(ll, dataset_size as f64 / b as f64, 0.0)?;

            let tau = match (fixed_tau, alpha_v) {
                (Some(t), _) => t,
                (None, Some(av)) => {
                    let az = mf_sample(tape, av, &noise.alpha_z)?;
                    let alpha = tape.softplus(az)?;
                    tape.record(
                        Op::PriorVariances {
                            rho: self.rho.clone(),
                            weight: self.weight.clone(),
                            sigma0_sq: self.spec.prior.sigma0_sq,
                        },
                        &[alpha],
                    )?
                }
                (None, None) => return Err(invalid("learned alpha without an alpha guide")),
            };
            let kl = tape.record(Op::KlLowRank { dim: d, rank: r, eps: guides.spectral.eps }, &[mu, u, lam, sig, tau])?;
            ll_sum += tape.value(ll)[0];
            kl_sum += tape.value(kl)[0];
            terms.push(tape.sub(ll, kl)?);
        }
        let mut total = terms[0];
        for &t in &terms[1..] {
            total = tape.add(total, t)?;
        }
        let mut elbo = tape.affine(total, 1.0 / noises.len() as f64, 0.0)?;
        let mut kl_base = 0.0;
        for v in &base {
            let k = mf_kl(tape, v)?;
            kl_base += tape.value(k)[0];
            elbo = tape.sub(elbo, k)?;
        }
        debug_assert_eq!(flat_leaves(tape, &leaves), guides.len());
        let n = noises.len() as f64;
        let out = ElboTerms {
            elbo: tape.value(elbo)[0],
            log_lik: ll_sum / n,
            kl_spectral: kl_sum / n,
            kl_base,
        };
        Ok((elbo, leaves, out))
    }

    /// ELBO for explicit noise draws (common random numbers).
    pub fn elbo_with_noise(
        &self,
        guides: &Guides,
        batch: &Batch<'_>,
        dataset_size: usize,
        noises: &[Noise],
    ) -> Result<ElboTerms> {
        let mut tape = Tape::new();
        Ok(self.record_elbo(&mut tape, guides, batch, dataset_size, noises)?.2)
    }

    /// ELBO and its gradient with respect to [`Guides::to_flat`].
    pub fn elbo_grad_with_noise(
        &self,
        guides: &Guides,
        batch: &Batch<'_>,
        dataset_size: usize,
        noises: &[Noise],
    ) -> Result<(ElboTerms, Vec<f64>)> {
        let mut tape = Tape::new();
        let (root, leaves, terms) = self.record_elbo(&mut tape, guides, batch, dataset_size, noises)?;
        let grads = tape.backward(root)?;
        let mut flat = Vec::with_capacity(guides.len());
        for v in leaves {
            flat.extend(grads.get_or_zeros(v, tape.value(v).len()));
        }
        Ok((terms, flat))
    }

    /// Monte-Carlo ELBO with `n_mc` fresh draws.
    pub fn elbo<R: Rng + ?Sized>(
        &self,
        guides: &Guides,
        batch: &Batch<'_>,
        dataset_size: usize,
        rng: &mut R,
        n_mc: usize,
    ) -> Result<ElboTerms> {
        let noises: Vec<Noise> = (0..n_mc).map(|_| Noise::draw(guides, rng)).collect();
        self.elbo_with_noise(guides, batch, dataset_size, &noises)
    }
}

/// Spectral layer of a deterministic network.
#[derive(Debug, Clone)]
pub enum SpectralLayer {
    Circulant(SpectralCirculant1d),
    Bccb(SpectralBccb2d),
}

/// `spectral layer -> tanh -> linear` with concrete parameters.
#[derive(Debug, Clone)]
pub struct Network {
    pub layer: SpectralLayer,
    /// Row-major `features x classes`.
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
    pub classes: usize,
}

impl Network {
    pub fn hidden(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = match &self.layer {
            SpectralLayer::Circulant(l) => l.forward(x)?,
            SpectralLayer::Bccb(l) => l.forward(x)?,
        };
        Ok(y.into_iter().map(math::tanh).collect())
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.hidden(x)?;
        let c = self.classes;
        let mut out = self.head_b.clone();
        for (f, &zv) in z.iter().enumerate() {
            for k in 0..c {
                out[k] += zv * self.head_w[f * c + k];
            }
        }
        Ok(out)
    }

    /// Head weights as the row-major `classes x features` matrix of the
    /// linear map `z -> W^T z`.
    pub fn head_matrix(&self) -> Vec<f64> {
        let c = self.classes;
        let f = self.head_w.len() / c;
        let mut m = vec![0.0; c * f];
        for i in 0..f {
            for k in 0..c {
                m[k * f + i] = self.head_w[i * c + k];
            }
        }
        m
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&v| math::exp(v - mx)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Posterior predictive probabilities (row-major `n x classes`) averaged
/// over `samples` posterior draws.
pub fn predictive_probs<R: Rng + ?Sized>(
    model: &Model,
    guides: &Guides,
    x: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let dim = model.input_dim();
    if x.len() % dim != 0 {
        return Err(shape_err("input length is not a multiple of the input dimension"));
    }
    if samples == 0 {
        return Err(invalid("at least one posterior sample is required"));
    }
    let (n, c) = (x.len() / dim, model.classes());
    let mut probs = vec![0.0; n * c];
    for _ in 0..samples {
        let net = model.network(&guides.sample(rng))?;
        for i in 0..n {
            let p = softmax(&net.logits(&x[i * dim..(i + 1) * dim])?);
            probs[i * c..(i + 1) * c].iter_mut().zip(p).for_each(|(a, b)| *a += b);
        }
    }
    let inv = 1.0 / samples as f64;
    probs.iter_mut().for_each(|v| *v *= inv);
    Ok(probs)
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(probs: &[f64], labels: &[usize], classes: usize) -> f64 {
    let correct = probs
        .chunks_exact(classes)
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    correct as f64 / labels.len().max(1) as f64
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Posterior-mean alpha implied by the guides.
pub fn alpha_of(model: &Model, p: &PointParams) -> f64 {
    match model.spec().prior.alpha {
        AlphaMode::Fixed(a) => a,
        AlphaMode::Learned { .. } => math::softplus(p.alpha_z.unwrap_or(0.0)),
    }
}

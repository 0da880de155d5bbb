//! Spectral circulant (1D) and spectral BCCB (2D) layers.
//!
//! Both layers are parameterised by their effective real coordinates; the
//! stored half-spectrum / half-planes are always the masked, Hermitian
//! expansion of those coordinates.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{invalid, shape_err, Result};
use crate::fft::{half_len, HalfPlane, HalfSpectrum, Layout1d, Layout2d, RealFft, RealFft2d};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(shape_err(format!("{what}: expected length {expected}, got {got}")));
    }
    Ok(())
}

fn self_conjugate(k: usize, n: usize) -> bool {
    k == 0 || 2 * k == n
}

/// `y = irfft(mask(h) * rfft(x)) + b` on length-`d` signals.
#[derive(Debug, Clone)]
pub struct SpectralCirculant1d {
    layout: Layout1d,
    spectrum: HalfSpectrum,
    bias: Option<f64>,
    plan: Arc<RealFft>,
}

impl SpectralCirculant1d {
    /// Keeps the lowest `active` bins of `spectrum` and zeroes the rest.
    pub fn new(spectrum: HalfSpectrum, active: usize, bias: Option<f64>) -> Result<Self> {
        let layout = Layout1d::new(spectrum.signal_len(), active)?;
        let coords = layout.pack(&spectrum)?;
        Self::from_coords(layout, &coords, bias)
    }

    pub fn from_coords(layout: Layout1d, coords: &[f64], bias: Option<f64>) -> Result<Self> {
        let spectrum = layout.unpack(coords)?;
        Ok(Self {
            plan: Arc::new(RealFft::new(layout.signal_len())),
            layout,
            spectrum,
            bias,
        })
    }

    /// All-ones half-spectrum: the identity map.
    pub fn identity(d: usize) -> Result<Self> {
        Self::new(HalfSpectrum::constant(d, 1.0), half_len(d), None)
    }

    pub fn dim(&self) -> usize {
        self.layout.signal_len()
    }

    pub fn layout(&self) -> &Layout1d {
        &self.layout
    }

    pub fn spectrum(&self) -> &HalfSpectrum {
        &self.spectrum
    }

    pub fn bias(&self) -> Option<f64> {
        self.bias
    }

    pub fn plan(&self) -> &Arc<RealFft> {
        &self.plan
    }

    pub fn coords(&self) -> Vec<f64> {
        self.layout
            .pack(&self.spectrum)
            .expect("layout matches its own spectrum")
    }

    /// Re-applies the band limit; a no-op for a layer built by this module.
    pub fn apply_mask(&self) -> Self {
        self.clone()
    }

    /// Same coefficients under a new cutoff `active`.
    pub fn with_cutoff(&self, active: usize) -> Result<Self> {
        Self::new(self.spectrum.clone(), active, self.bias)
    }

    /// Spatial filter `w = irfft(h)`; the layer equals `circulant(w)`.
    pub fn filter(&self) -> Vec<f64> {
        self.plan.inverse(&self.spectrum).expect("plan matches spectrum")
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        check_len("spectral circulant input", x.len(), d)?;
        let mut xh = vec![ZERO; self.layout.half_len()];
        self.plan.forward_into(x, &mut xh);
        for (z, h) in xh.iter_mut().zip(self.spectrum.coeffs()) {
            *z *= h;
        }
        let mut y = vec![0.0; d];
        self.plan.inverse_into(&xh, &mut y);
        if let Some(b) = self.bias {
            y.iter_mut().for_each(|v| *v += b);
        }
        Ok(y)
    }

    /// Gradient of `<g, forward(x)>` with respect to the effective
    /// coordinates: `(c_k / d) rfft(g)_k conj(rfft(x)_k)` folded through the
    /// layout adjoint.
    pub fn vjp_weights(&self, x: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        check_len("input", x.len(), d)?;
        check_len("upstream", g.len(), d)?;
        let kh = self.layout.half_len();
        let (mut xh, mut gh) = (vec![ZERO; kh], vec![ZERO; kh]);
        self.plan.forward_into(x, &mut xh);
        self.plan.forward_into(g, &mut gh);
        let grad_half: Vec<Complex64> = (0..kh)
            .map(|k| {
                let c = if self_conjugate(k, d) { 1.0 } else { 2.0 };
                gh[k] * xh[k].conj() * (c / d as f64)
            })
            .collect();
        let mut ga = vec![0.0; self.layout.d_eff()];
        self.layout.unpack_adjoint(&grad_half, &mut ga);
        Ok(ga)
    }

    /// `irfft(conj(h) * rfft(g))`, the transpose circulant applied to `g`.
    pub fn vjp_inputs(&self, g: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        check_len("upstream", g.len(), d)?;
        let mut gh = vec![ZERO; self.layout.half_len()];
        self.plan.forward_into(g, &mut gh);
        for (z, h) in gh.iter_mut().zip(self.spectrum.coeffs()) {
            *z *= h.conj();
        }
        let mut out = vec![0.0; d];
        self.plan.inverse_into(&gh, &mut out);
        Ok(out)
    }

    /// `Some(sum g)` when the layer has a bias.
    pub fn vjp_bias(&self, g: &[f64]) -> Option<f64> {
        self.bias.map(|_| g.iter().sum())
    }
}

/// `Y[o] = irfft2(sum_c K[o,c] * rfft2(X[c])) + b[o]` on `rows x cols` grids.
#[derive(Debug, Clone)]
pub struct SpectralBccb2d {
    cout: usize,
    cin: usize,
    layout: Arc<Layout2d>,
    /// Row-major over `(o, c)`.
    planes: Vec<HalfPlane>,
    bias: Option<Vec<f64>>,
    plan: Arc<RealFft2d>,
}

impl SpectralBccb2d {
    /// `planes` is row-major over `(o, c)`. Bins outside the radial
    /// cutoff are zeroed.
    pub fn new(
        cout: usize,
        cin: usize,
        planes: Vec<HalfPlane>,
        radial_cutoff: Option<f64>,
        bias: Option<Vec<f64>>,
    ) -> Result<Self> {
        if cout == 0 || cin == 0 {
            return Err(invalid("channel counts must be positive"));
        }
        check_len("kernel planes", planes.len(), cout * cin)?;
        let (rows, cols) = (planes[0].rows(), planes[0].cols());
        if planes.iter().any(|p| p.rows() != rows || p.cols() != cols) {
            return Err(shape_err("kernel planes differ in size"));
        }
        let layout = Layout2d::new(rows, cols, radial_cutoff)?;
        let mut coords = Vec::with_capacity(cout * cin * layout.d_eff());
        for p in &planes {
            coords.extend(layout.pack(p)?);
        }
        Self::from_coords(cout, cin, Arc::new(layout), &coords, bias)
    }

    /// `coords` holds `cout * cin` consecutive blocks of `layout.d_eff()`.
    pub fn from_coords(
        cout: usize,
        cin: usize,
        layout: Arc<Layout2d>,
        coords: &[f64],
        bias: Option<Vec<f64>>,
    ) -> Result<Self> {
        let d = layout.d_eff();
        check_len("coordinates", coords.len(), cout * cin * d)?;
        if let Some(b) = &bias {
            check_len("bias", b.len(), cout)?;
        }
        // The DC bin is always active, so d >= 1.
        let planes = coords
            .chunks_exact(d)
            .map(|a| layout.unpack(a))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cout,
            cin,
            plan: Arc::new(RealFft2d::new(layout.rows(), layout.cols())),
            layout,
            planes,
            bias,
        })
    }

    /// Single-channel all-ones layer: the identity map.
    pub fn identity(rows: usize, cols: usize) -> Result<Self> {
        Self::new(1, 1, vec![HalfPlane::constant(rows, cols, 1.0)], None, None)
    }

    pub fn cout(&self) -> usize {
        self.cout
    }

    pub fn cin(&self) -> usize {
        self.cin
    }

    pub fn rows(&self) -> usize {
        self.layout.rows()
    }

    pub fn cols(&self) -> usize {
        self.layout.cols()
    }

    pub fn layout(&self) -> &Arc<Layout2d> {
        &self.layout
    }

    pub fn planes(&self) -> &[HalfPlane] {
        &self.planes
    }

    pub fn plane(&self, o: usize, c: usize) -> &HalfPlane {
        &self.planes[o * self.cin + c]
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    pub fn plan(&self) -> &Arc<RealFft2d> {
        &self.plan
    }

    pub fn coords(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.cout * self.cin * self.layout.d_eff());
        for p in &self.planes {
            out.extend(self.layout.pack(p).expect("layout matches its planes"));
        }
        out
    }

    pub fn apply_mask(&self) -> Self {
        self.clone()
    }

    /// Same coefficients under a new radial cutoff.
    pub fn with_cutoff(&self, radial_cutoff: Option<f64>) -> Result<Self> {
        Self::new(self.cout, self.cin, self.planes.clone(), radial_cutoff, self.bias.clone())
    }

    /// `cout x cin` complex mixing matrix at half-plane bin `bin`.
    pub fn mixing_matrix(&self, bin: usize) -> Vec<Complex64> {
        self.planes.iter().map(|p| p.coeffs()[bin]).collect()
    }

    fn spectra(&self, x: &[f64], channels: usize) -> Vec<Complex64> {
        let (hw, bins) = (self.rows() * self.cols(), self.plan.bins());
        let mut out = vec![ZERO; channels * bins];
        for c in 0..channels {
            self.plan
                .forward_raw(&x[c * hw..(c + 1) * hw], &mut out[c * bins..(c + 1) * bins]);
        }
        out
    }

    /// `x` is `cin x rows x cols`; returns `cout x rows x cols`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (hw, bins) = (self.rows() * self.cols(), self.plan.bins());
        check_len("spectral BCCB input", x.len(), self.cin * hw)?;
        let xh = self.spectra(x, self.cin);
        let mut y = vec![0.0; self.cout * hw];
        let mut acc = vec![ZERO; bins];
        for o in 0..self.cout {
            acc.fill(ZERO);
            for c in 0..self.cin {
                let k = self.plane(o, c).coeffs();
                for ((a, kv), xv) in acc.iter_mut().zip(k).zip(&xh[c * bins..(c + 1) * bins]) {
                    *a += kv * xv;
                }
            }
            let yo = &mut y[o * hw..(o + 1) * hw];
            self.plan.inverse_raw(&acc, yo);
            if let Some(b) = &self.bias {
                yo.iter_mut().for_each(|v| *v += b[o]);
            }
        }
        Ok(y)
    }

    /// Upstream gradient on each output spectrum: `(c_v / HW) rfft2(g[o])`.
    fn upstream_spectra(&self, g: &[f64]) -> Vec<Complex64> {
        let (hw, wh, w) = (self.rows() * self.cols(), self.plan.half_cols(), self.cols());
        let mut gh = self.spectra(g, self.cout);
        for (i, z) in gh.iter_mut().enumerate() {
            let c = if self_conjugate(i % wh, w) { 1.0 } else { 2.0 };
            *z *= c / hw as f64;
        }
        gh
    }

    /// Gradient with respect to the effective coordinates of every plane,
    /// in the order of [`SpectralBccb2d::coords`].
    pub fn vjp_weights(&self, x: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        let (hw, bins, d) = (self.rows() * self.cols(), self.plan.bins(), self.layout.d_eff());
        check_len("input", x.len(), self.cin * hw)?;
        check_len("upstream", g.len(), self.cout * hw)?;
        let xh = self.spectra(x, self.cin);
        let gh = self.upstream_spectra(g);
        let mut ga = vec![0.0; self.cout * self.cin * d];
        let mut buf = vec![ZERO; bins];
        for o in 0..self.cout {
            for c in 0..self.cin {
                for (q, b) in buf.iter_mut().enumerate() {
                    *b = gh[o * bins + q] * xh[c * bins + q].conj();
                }
                let p = o * self.cin + c;
                self.layout.unpack_adjoint(&buf, &mut ga[p * d..(p + 1) * d]);
            }
        }
        Ok(ga)
    }

    /// Gradient with respect to the `cin x rows x cols` input.
    pub fn vjp_inputs(&self, g: &[f64]) -> Result<Vec<f64>> {
        let (hw, bins) = (self.rows() * self.cols(), self.plan.bins());
        let (wh, w) = (self.plan.half_cols(), self.cols());
        check_len("upstream", g.len(), self.cout * hw)?;
        let gh = self.upstream_spectra(g);
        let mut out = vec![0.0; self.cin * hw];
        let mut acc = vec![ZERO; bins];
        for c in 0..self.cin {
            acc.fill(ZERO);
            for o in 0..self.cout {
                let k = self.plane(o, c).coeffs();
                for (q, a) in acc.iter_mut().enumerate() {
                    *a += gh[o * bins + q] * k[q].conj();
                }
            }
            for (q, a) in acc.iter_mut().enumerate() {
                let cv = if self_conjugate(q % wh, w) { 1.0 } else { 2.0 };
                *a *= hw as f64 / cv;
            }
            self.plan.inverse_raw(&acc, &mut out[c * hw..(c + 1) * hw]);
        }
        Ok(out)
    }

    /// Per-output-channel sums of `g` when the layer has biases.
    pub fn vjp_bias(&self, g: &[f64]) -> Option<Vec<f64>> {
        let hw = self.rows() * self.cols();
        self.bias
            .as_ref()
            .map(|_| g.chunks_exact(hw).map(|c| c.iter().sum()).collect())
    }
}

/// Weight and bias counts (weights exclude biases).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParamCount {
    pub weights: usize,
    pub biases: usize,
}

impl ParamCount {
    pub fn total(&self) -> usize {
        self.weights + self.biases
    }
}

impl core::ops::Add for ParamCount {
    type Output = ParamCount;

    fn add(self, rhs: ParamCount) -> ParamCount {
        ParamCount {
            weights: self.weights + rhs.weights,
            biases: self.biases + rhs.biases,
        }
    }
}

/// Layer description used for parameter accounting.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    /// `active = None` keeps the full half-spectrum.
    SpectralCirculant1d { d: usize, active: Option<usize>, bias: bool },
    SpectralBccb2d {
        cout: usize,
        cin: usize,
        rows: usize,
        cols: usize,
        radial_cutoff: Option<f64>,
        bias: bool,
    },
    /// Spatially parameterised BCCB: one full kernel per channel pair.
    SpatialBccb { cout: usize, cin: usize, rows: usize, cols: usize, bias: bool },
    Conv2d { cout: usize, cin: usize, kernel: usize, bias: bool },
    Dense { inputs: usize, outputs: usize, bias: bool },
}

/// `2K - 2` when `K = d/2 + 1` with `d` even, else `2K - 1`.
pub fn spectral_weights_1d(d: usize, active: usize) -> Result<usize> {
    Ok(Layout1d::new(d, active)?.d_eff())
}

impl LayerSpec {
    pub fn param_count(&self) -> Result<ParamCount> {
        let b = |on: bool, n: usize| if on { n } else { 0 };
        Ok(match *self {
            LayerSpec::SpectralCirculant1d { d, active, bias } => ParamCount {
                weights: spectral_weights_1d(d, active.unwrap_or(half_len(d)))?,
                biases: b(bias, 1),
            },
            LayerSpec::SpectralBccb2d { cout, cin, rows, cols, radial_cutoff, bias } => ParamCount {
                weights: cout * cin * Layout2d::new(rows, cols, radial_cutoff)?.d_eff(),
                biases: b(bias, cout),
            },
            LayerSpec::SpatialBccb { cout, cin, rows, cols, bias } => ParamCount {
                weights: cout * cin * rows * cols,
                biases: b(bias, cout),
            },
            LayerSpec::Conv2d { cout, cin, kernel, bias } => ParamCount {
                weights: cout * cin * kernel * kernel,
                biases: b(bias, cout),
            },
            LayerSpec::Dense { inputs, outputs, bias } => ParamCount {
                weights: inputs * outputs,
                biases: b(bias, outputs),
            },
        })
    }
}

/// Sums per-layer counts.
pub fn param_count(layers: &[LayerSpec]) -> Result<ParamCount> {
    layers
        .iter()
        .try_fold(ParamCount::default(), |acc, l| Ok(acc + l.param_count()?))
}

//! Spectral norms, product Lipschitz bounds, margin certificates and prior
//! tail bounds.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::fft::HalfSpectrum;
use crate::layers::{SpectralBccb2d, SpectralCirculant1d};
use crate::linalg::{complex_sigma_max, dense_spectral_norm};
use crate::math;
use crate::svi::{Network, SpectralLayer};

/// `max_k |h_k|` over a half-spectrum.
pub fn half_spectrum_norm(h: &HalfSpectrum) -> f64 {
    h.coeffs().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Exact operator 2-norm of a 1D spectral layer (masked bins are zero).
pub fn spectral_norm_1d(layer: &SpectralCirculant1d) -> f64 {
    half_spectrum_norm(layer.spectrum())
}

/// Exact operator 2-norm of a 2D spectral layer: the largest singular
/// value of the `cout x cin` mixing matrix over half-plane bins.
pub fn spectral_norm_2d(layer: &SpectralBccb2d) -> f64 {
    let bins = layer.layout().bins();
    (0..bins)
        .filter(|&b| layer.layout().is_active(b))
        .map(|b| complex_sigma_max(&layer.mixing_matrix(b), layer.cout(), layer.cin()))
        .fold(0.0, f64::max)
}

/// A layer as seen by the product bound.
#[derive(Debug, Clone)]
pub enum LipschitzLayer<'a> {
    Spectral1d(&'a SpectralCirculant1d),
    Spectral2d(&'a SpectralBccb2d),
    /// Row-major `rows x cols` weight matrix of `x -> W x`.
    Dense { weights: &'a [f64], rows: usize, cols: usize },
    /// Declared 1-Lipschitz (tanh, ReLU, ...).
    Activation(String),
    /// Anything else; the bound refuses it.
    Unclassified(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkBound {
    /// Norm of each layer in order (1 for activations).
    pub per_layer: Vec<f64>,
    pub product: f64,
}

/// Product of per-layer operator norms; biases are ignored.
pub fn network_lipschitz(layers: &[LipschitzLayer<'_>]) -> Result<NetworkBound> {
    let mut per_layer = Vec::with_capacity(layers.len());
    for l in layers {
        per_layer.push(match l {
            LipschitzLayer::Spectral1d(s) => spectral_norm_1d(s),
            LipschitzLayer::Spectral2d(s) => spectral_norm_2d(s),
            LipschitzLayer::Dense { weights, rows, cols } => {
                if weights.len() != rows * cols {
                    return Err(invalid("dense weight shape mismatch"));
                }
                dense_spectral_norm(weights, *rows, *cols).value
            }
            LipschitzLayer::Activation(_) => 1.0,
            LipschitzLayer::Unclassified(name) => return Err(Error::UnclassifiedLayer(name.clone())),
        });
    }
    let product = per_layer.iter().product();
    Ok(NetworkBound { per_layer, product })
}

/// Bound for `spectral layer -> tanh -> linear head`.
pub fn network_bound(net: &Network) -> Result<NetworkBound> {
    let head = net.head_matrix();
    let features = head.len() / net.classes;
    let first = match &net.layer {
        SpectralLayer::Circulant(l) => LipschitzLayer::Spectral1d(l),
        SpectralLayer::Bccb(l) => LipschitzLayer::Spectral2d(l),
    };
    network_lipschitz(&[
        first,
        LipschitzLayer::Activation(String::from("tanh")),
        LipschitzLayer::Dense { weights: &head, rows: net.classes, cols: features },
    ])
}

/// Certificates for row-major inputs `x` under [`network_bound`].
pub fn certify_network(net: &Network, x: &[f64], labels: &[usize]) -> Result<CertReport> {
    let bound = network_bound(net)?;
    let n = labels.len();
    if n == 0 || x.len() % n != 0 {
        return Err(invalid("inputs do not split into one row per label"));
    }
    let d = x.len() / n;
    let mut logits = Vec::with_capacity(n * net.classes);
    for row in x.chunks_exact(d) {
        logits.extend(net.logits(row)?);
    }
    certify_logits(&logits, labels, net.classes, bound)
}

/// `logits[y] - max_{k != y} logits[k]`.
pub fn margin(logits: &[f64], y: usize) -> Result<f64> {
    if logits.len() < 2 {
        return Err(invalid("margin needs at least two classes"));
    }
    if y >= logits.len() {
        return Err(Error::OutOfRange { index: y, len: logits.len() });
    }
    let other = logits
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != y)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(logits[y] - other)
}

/// `max(m, 0) / (2 L)`.
pub fn cert_radius(margin: f64, lipschitz: f64) -> f64 {
    if margin <= 0.0 {
        0.0
    } else {
        margin / (2.0 * lipschitz)
    }
}

/// One certified input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertEntry {
    pub index: usize,
    pub label: usize,
    pub margin: f64,
    pub radius: f64,
}

/// Per-input certificates against a single network bound.
#[derive(Debug, Clone, PartialEq)]
pub struct CertReport {
    pub bound: NetworkBound,
    pub entries: Vec<CertEntry>,
}

/// Certifies every row of `logits` (row-major, `classes` wide).
pub fn certify_logits(logits: &[f64], labels: &[usize], classes: usize, bound: NetworkBound) -> Result<CertReport> {
    if classes == 0 || logits.len() != labels.len() * classes {
        return Err(invalid("logits and labels disagree"));
    }
    let entries = logits
        .chunks_exact(classes)
        .zip(labels)
        .enumerate()
        .map(|(index, (row, &label))| {
            let m = margin(row, label)?;
            Ok(CertEntry { index, label, margin: m, radius: cert_radius(m, bound.product) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CertReport { bound, entries })
}

/// `2 m exp(-t^2 / (2 S_max))`, unclipped.
pub fn prior_tail_bound(m_active: usize, s_max: f64, t: f64) -> Result<f64> {
    check_tail_args(m_active, s_max)?;
    if !(t > 0.0) {
        return Err(invalid("t must be positive"));
    }
    Ok(2.0 * m_active as f64 * math::exp(-t * t / (2.0 * s_max)))
}

/// Clips a probability bound to `[0, 1]` for reporting.
pub fn clip_probability(p: f64) -> f64 {
    p.clamp(0.0, 1.0)
}

/// `t = sqrt(2 S_max log(2 m / delta))`.
pub fn prior_tail_radius(m_active: usize, s_max: f64, delta: f64) -> Result<f64> {
    check_tail_args(m_active, s_max)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta must lie in (0, 1)"));
    }
    Ok(math::sqrt(2.0 * s_max * math::ln(2.0 * m_active as f64 / delta)))
}

fn check_tail_args(m_active: usize, s_max: f64) -> Result<()> {
    if m_active == 0 {
        return Err(invalid("at least one active bin is required"));
    }
    if !(s_max > 0.0) {
        return Err(invalid("S_max must be positive"));
    }
    Ok(())
}

/// Active-bin count and largest prior variance of one spectral layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerPrior {
    pub m_active: usize,
    pub s_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTail {
    pub radii: Vec<f64>,
    pub product: f64,
}

/// Simultaneous radii `sqrt(2 S_max log(2 m L / delta))` for `L` layers.
pub fn prior_tail_bound_network(layers: &[LayerPrior], delta: f64) -> Result<NetworkTail> {
    if layers.is_empty() {
        return Err(invalid("no layers"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta must lie in (0, 1)"));
    }
    let l = layers.len() as f64;
    let radii = layers
        .iter()
        .map(|p| prior_tail_radius(p.m_active, p.s_max, delta / l))
        .collect::<Result<Vec<_>>>()?;
    let product = radii.iter().product();
    Ok(NetworkTail { radii, product })
}

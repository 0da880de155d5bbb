use std::path::Path;

use circspec_core::certify::{certify_network, prior_tail_bound_network, LayerPrior};
use circspec_core::fft::half_len;
use circspec_core::prior::{Grid, SpectrumProfile};
use circspec_core::svi::model::alpha_of;
use circspec_core::svi::{Architecture, Model};
use serde_json::{json, Value};

use super::{load_checked, require, require_checkpoint};
use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::Result;
use crate::output::{fmt_f64, OutputDir};

/// Prior tail inputs for the spectral layer; `None` when the layer has
/// several output channels, where the single-filter bound does not apply.
fn layer_prior(model: &Model, alpha: f64) -> Result<Option<LayerPrior>> {
    let sigma0_sq = model.spec().prior.sigma0_sq;
    let lp = match model.spec().arch {
        Architecture::Spectral1d { dim, active } => {
            let profile = SpectrumProfile::new(sigma0_sq, alpha, Grid::Circle(dim))?;
            let m = active.unwrap_or(half_len(dim));
            let s_max = (0..m).map(|k| profile.variance_1d(k)).collect::<Result<Vec<_>, _>>()?.into_iter().fold(0.0, f64::max);
            LayerPrior { m_active: m, s_max }
        }
        Architecture::Bccb2d { rows, cols, channels: 1, radial_cutoff } => {
            let profile = SpectrumProfile::new(sigma0_sq, alpha, Grid::Torus { rows, cols })?;
            let layout = circspec_core::fft::Layout2d::new(rows, cols, radial_cutoff)?;
            let wh = half_len(cols);
            let mut m = 0;
            let mut s_max = 0.0f64;
            for bin in (0..layout.bins()).filter(|&b| layout.is_active(b)) {
                m += 1;
                s_max = s_max.max(profile.variance_2d(bin / wh, bin % wh)?);
            }
            LayerPrior { m_active: m, s_max }
        }
        Architecture::Bccb2d { .. } => return Ok(None),
    };
    Ok(Some(lp))
}

pub fn certify(cfg: &RunConfig, digest: &str, out: &Path) -> Result<Value> {
    let model = Model::new(cfg.model_spec())?;
    let (_, trainer) = checkpoint::load_for(require_checkpoint(cfg)?, model, cfg)?;
    let test = load_checked(require(&cfg.data.test, "test")?, &trainer.model)?;
    let mean = trainer.guides.mean();
    let net = trainer.model.network(&mean)?;
    let report = certify_network(&net, &test.x, &test.labels)?;

    let n = report.entries.len();
    let correct = report.entries.iter().filter(|e| e.margin > 0.0).count();
    let mut radii: Vec<f64> = report.entries.iter().map(|e| e.radius).collect();
    radii.sort_by(f64::total_cmp);
    let median = if n == 0 { 0.0 } else { radii[(n - 1) / 2] };

    let alpha = alpha_of(&trainer.model, &mean);
    let tail = match layer_prior(&trainer.model, alpha)? {
        Some(lp) => {
            let t = prior_tail_bound_network(&[lp], cfg.certify.delta)?;
            json!({
                "delta": cfg.certify.delta,
                "alpha": alpha,
                "layers": [{ "m_active": lp.m_active, "s_max": lp.s_max }],
                "radii": t.radii,
                "product": t.product,
            })
        }
        None => Value::Null,
    };

    let mut dir = OutputDir::create(out, "certify", digest)?;
    dir.csv(
        "cert_report.csv",
        "circspec.cert_report",
        &["index", "label", "margin", "radius"],
        report.entries.iter().map(|e| vec![e.index.to_string(), e.label.to_string(), fmt_f64(e.margin), fmt_f64(e.radius)]),
    )?;
    dir.json(
        "cert_report.json",
        "circspec.cert_summary",
        json!({
            "parameters": "posterior mean",
            "lipschitz": { "layers": ["spectral", "tanh", "linear"], "per_layer": report.bound.per_layer, "product": report.bound.product },
            "n": n,
            "correct": correct,
            "mean_radius": if n == 0 { 0.0 } else { radii.iter().sum::<f64>() / n as f64 },
            "median_radius": median,
            "prior_tail": tail,
        }),
    )?;
    dir.finish()
}

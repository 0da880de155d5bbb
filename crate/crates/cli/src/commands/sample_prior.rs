use std::path::Path;

use circspec_core::prior::{
    prior_covariance_1d, prior_covariance_2d, sample_prior_field_2d, sample_prior_filter_1d, Grid, SpectrumProfile,
};
use circspec_core::rng::{SeedableRng, StreamRng};
use serde_json::{json, Value};

use crate::config::{AlphaConfig, ArchConfig, RunConfig};
use crate::error::{config_err, Result};
use crate::output::{fmt_f64, OutputDir};

/// Mean and standard error of `w[0] * w[lag]` over draws.
fn lag_moments(draws: &[Vec<f64>], lag: usize) -> (f64, f64) {
    let n = draws.len() as f64;
    let prods: Vec<f64> = draws.iter().map(|w| w[0] * w[lag]).collect();
    let mean = prods.iter().sum::<f64>() / n;
    let var = prods.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

pub fn sample_prior(cfg: &RunConfig, digest: &str, out: &Path) -> Result<Value> {
    let alpha = match cfg.prior.alpha {
        AlphaConfig::Fixed { value } => value,
        AlphaConfig::Learned { init } => init,
    };
    let (grid, lag_cols): (Grid, &[&str]) = match cfg.model.architecture {
        ArchConfig::Spectral1d { dim, .. } => (Grid::Circle(dim), &["lag"]),
        ArchConfig::Bccb2d { rows, cols, .. } => (Grid::Torus { rows, cols }, &["lag_row", "lag_col"]),
    };
    let profile = SpectrumProfile::new(cfg.prior.sigma0_sq, alpha, grid)?;
    let sp = &cfg.sample_prior;
    if sp.covariance_samples < 2 {
        return Err(config_err("sample_prior.covariance_samples must be at least 2"));
    }
    let mut rng = StreamRng::seed_from_u64(cfg.seed);
    let draw = |rng: &mut StreamRng| match grid {
        Grid::Circle(_) => sample_prior_filter_1d(&profile, rng),
        Grid::Torus { .. } => sample_prior_field_2d(&profile, rng),
    };
    let filters = (0..sp.count).map(|_| draw(&mut rng)).collect::<Result<Vec<_>, _>>()?;
    let cov_draws = (0..sp.covariance_samples).map(|_| draw(&mut rng)).collect::<Result<Vec<_>, _>>()?;
    let closed = match grid {
        Grid::Circle(_) => prior_covariance_1d(&profile)?,
        Grid::Torus { .. } => prior_covariance_2d(&profile)?,
    };
    let len = closed.len();

    let mut dir = OutputDir::create(out, "sample-prior", digest)?;
    let mut header = vec!["index".to_string()];
    header.extend((0..len).map(|t| format!("w_{t}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    dir.csv(
        "filters.csv",
        "circspec.prior_filters",
        &header_refs,
        filters.iter().enumerate().map(|(i, w)| {
            let mut row = vec![i.to_string()];
            row.extend(w.iter().map(|v| fmt_f64(*v)));
            row
        }),
    )?;
    let mut cov_header: Vec<&str> = lag_cols.to_vec();
    cov_header.extend(["closed_form", "empirical", "std_error"]);
    let cov_rows = (0..len).map(|lag| {
        let (m, se) = lag_moments(&cov_draws, lag);
        let mut row = match grid {
            Grid::Circle(_) => vec![lag.to_string()],
            Grid::Torus { cols, .. } => vec![(lag / cols).to_string(), (lag % cols).to_string()],
        };
        row.extend([fmt_f64(closed[lag]), fmt_f64(m), fmt_f64(se)]);
        row
    });
    dir.csv("covariance.csv", "circspec.prior_covariance", &cov_header, cov_rows.collect::<Vec<_>>())?;
    dir.json(
        "prior.json",
        "circspec.prior_summary",
        json!({
            "sigma0_sq": cfg.prior.sigma0_sq,
            "alpha": alpha,
            "grid": match grid {
                Grid::Circle(n) => json!({ "circle": n }),
                Grid::Torus { rows, cols } => json!({ "rows": rows, "cols": cols }),
            },
            "filters": sp.count,
            "covariance_samples": sp.covariance_samples,
        }),
    )?;
    dir.finish()
}

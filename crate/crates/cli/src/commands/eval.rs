use std::path::Path;

use circspec_core::metrics::{self, PredictiveBatch, DEFAULT_BINS};
use circspec_core::svi::{accuracy, predictive_probs, Model};
use serde_json::{json, Value};

use super::{eval_rng, load_checked, require, require_checkpoint};
use crate::checkpoint;
use crate::config::RunConfig;
use crate::data::load_source;
use crate::error::{config_err, Result};
use crate::output::{fmt_f64, OutputDir};

pub fn eval(cfg: &RunConfig, digest: &str, out: &Path) -> Result<Value> {
    let model = Model::new(cfg.model_spec())?;
    let (_, trainer) = checkpoint::load_for(require_checkpoint(cfg)?, model, cfg)?;
    let test_src = require(&cfg.data.test, "test")?;
    let test = load_checked(test_src, &trainer.model)?;
    let samples = cfg.mc.predictive_samples;
    if samples == 0 {
        return Err(config_err("mc.predictive_samples must be positive"));
    }
    let classes = trainer.model.classes();
    let mut rng = eval_rng(cfg.seed);
    let probs = predictive_probs(&trainer.model, &trainer.guides, &test.x, samples, &mut rng)?;
    let batch = PredictiveBatch::new(&probs, classes, Some(&test.labels))?;
    let nll = metrics::nll(&batch)?;
    let cal = metrics::calibration(&batch, DEFAULT_BINS)?;
    let id_entropy: Vec<f64> = batch.rows().map(metrics::entropy).collect();
    let id_score: Vec<f64> = id_entropy.iter().map(|h| -h).collect();

    let mut entropy_rows: Vec<Vec<String>> = id_entropy
        .iter()
        .enumerate()
        .map(|(i, h)| vec![test_src.name(), "id".into(), i.to_string(), fmt_f64(*h)])
        .collect();
    let mut ood_reports = Vec::new();
    let (mut auroc_sum, mut fpr_sum) = (0.0, 0.0);
    for src in &cfg.data.ood {
        let (data, origin) = load_source(src)?;
        if data.dim != trainer.model.input_dim() {
            return Err(crate::error::CliError::Format {
                path: origin,
                message: format!("rows have {} values, the model expects {}", data.dim, trainer.model.input_dim()),
            });
        }
        let p = predictive_probs(&trainer.model, &trainer.guides, &data.x, samples, &mut rng)?;
        let ood_batch = PredictiveBatch::new(&p, classes, None)?;
        let ent: Vec<f64> = ood_batch.rows().map(metrics::entropy).collect();
        let score: Vec<f64> = ent.iter().map(|h| -h).collect();
        let auroc = metrics::auroc(&id_score, &score)?;
        let fpr = metrics::fpr_at_95tpr(&id_score, &score)?;
        auroc_sum += auroc;
        fpr_sum += fpr;
        entropy_rows.extend(ent.iter().enumerate().map(|(i, h)| vec![src.name(), "ood".into(), i.to_string(), fmt_f64(*h)]));
        ood_reports.push(json!({
            "name": src.name(),
            "n": data.len(),
            "mean_entropy": mean(&ent),
            "auroc": auroc,
            "fpr_at_95tpr": fpr,
        }));
    }
    let k = cfg.data.ood.len() as f64;
    let ood_mean = if cfg.data.ood.is_empty() {
        Value::Null
    } else {
        json!({ "auroc": auroc_sum / k, "fpr_at_95tpr": fpr_sum / k })
    };

    let mut dir = OutputDir::create(out, "eval", digest)?;
    dir.json(
        "metrics.json",
        "circspec.metrics",
        json!({
            "predictive_samples": samples,
            "id": {
                "name": test_src.name(),
                "n": test.len(),
                "accuracy": accuracy(&probs, &test.labels, classes),
                "nll": nll.value,
                "nll_clamped": nll.clamped,
                "brier": metrics::brier(&batch)?,
                "ece": cal.ece,
                "mce": cal.mce,
                "calibration_bins": cal.bins,
                "mean_entropy": mean(&id_entropy),
            },
            "ood": ood_reports,
            "ood_mean": ood_mean,
            "score": "negative predictive entropy (higher = in-distribution)",
        }),
    )?;
    dir.csv("entropy.csv", "circspec.entropy", &["source", "split", "index", "entropy"], entropy_rows)?;
    dir.finish()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

use std::path::Path;

use circspec_core::rng::{SeedableRng, StreamRng};
use circspec_core::svi::{Model, Trainer};
use circspec_core::Error as CoreError;
use serde_json::{json, Value};

use super::{load_checked, require};
use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::output::{fmt_f64, OutputDir};

pub const CHECKPOINT_DIR: &str = "checkpoint";

fn trace_rows(trace: &[f64]) -> impl Iterator<Item = Vec<String>> + '_ {
    trace.iter().enumerate().map(|(i, e)| vec![i.to_string(), fmt_f64(*e)])
}

pub fn train(cfg: &RunConfig, digest: &str, out: &Path) -> Result<Value> {
    let model = Model::new(cfg.model_spec())?;
    let data = load_checked(require(&cfg.data.train, "train")?, &model)?;
    let mut trainer = match &cfg.resume {
        Some(dir) => {
            let (m, t) = checkpoint::load_for(dir, model, cfg)?;
            if m.training_digest != cfg.training_digest() {
                return Err(CliError::Checkpoint("resume: training settings differ from the checkpoint's".into()));
            }
            t
        }
        None => Trainer::new(model, StreamRng::seed_from_u64(cfg.seed))?,
    };
    let mut tc = cfg.train_config();
    let done = trainer.step as usize;
    if done > tc.steps {
        return Err(CliError::Checkpoint(format!("resume: checkpoint is at step {done}, past the budget {}", tc.steps)));
    }
    tc.steps -= done;
    let mut dir = OutputDir::create(out, "train", digest)?;
    let header = ["step", "elbo"];
    if let Err(e) = trainer.run(&data.view(), &tc) {
        if let CoreError::Diverged { trace, .. } = &e {
            dir.csv("elbo_trace.csv", "circspec.elbo_trace", &header, trace_rows(trace))?;
            dir.finish()?;
        }
        return Err(e.into());
    }
    let manifest = checkpoint::save(&dir.path(CHECKPOINT_DIR), &trainer, cfg, digest)?;
    dir.record(&format!("{CHECKPOINT_DIR}/{}", checkpoint::MANIFEST_FILE), "circspec.checkpoint");
    dir.record(&format!("{CHECKPOINT_DIR}/{}", checkpoint::PARAMS_FILE), "circspec.checkpoint.params");
    dir.csv("elbo_trace.csv", "circspec.elbo_trace", &header, trace_rows(&trainer.trace))?;
    dir.json(
        "train_summary.json",
        "circspec.train_summary",
        json!({
            "steps": trainer.step,
            "final_elbo": trainer.trace.last().copied(),
            "training_digest": manifest.training_digest,
            "guide_len": manifest.layout.guide_len,
        }),
    )?;
    dir.finish()
}

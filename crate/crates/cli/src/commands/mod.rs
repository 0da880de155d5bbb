//! The five workflows. Each reads a loaded config, writes its artefacts
//! under the output directory and returns the `outputs.json` document.

mod certify;
mod eval;
mod param_count;
mod sample_prior;
mod train;

use std::path::Path;

use circspec_core::svi::Model;
use serde_json::Value;

use crate::config::{DataSource, RunConfig};
use crate::data::{load_source, Dataset};
use crate::error::{config_err, Result};

pub use certify::certify;
pub use eval::eval;
pub use param_count::param_count;
pub use sample_prior::sample_prior;
pub use train::train;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SamplePrior,
    Train,
    Certify,
    Eval,
    ParamCount,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SamplePrior => "sample-prior",
            Command::Train => "train",
            Command::Certify => "certify",
            Command::Eval => "eval",
            Command::ParamCount => "param-count",
        }
    }
}

/// Loads the config at `config` (with an optional seed override) and runs
/// `cmd` into `out`.
pub fn run(cmd: Command, config: &Path, out: &Path, seed: Option<u64>) -> Result<Value> {
    let loaded = RunConfig::load(config, seed)?;
    let (cfg, digest) = (&loaded.config, loaded.digest.as_str());
    match cmd {
        Command::SamplePrior => sample_prior(cfg, digest, out),
        Command::Train => train(cfg, digest, out),
        Command::Certify => certify(cfg, digest, out),
        Command::Eval => eval(cfg, digest, out),
        Command::ParamCount => param_count(cfg, digest, out),
    }
}

fn load_checked(src: &DataSource, model: &Model) -> Result<Dataset> {
    let (data, origin) = load_source(src)?;
    data.check(model.input_dim(), model.classes(), &origin)?;
    Ok(data)
}

fn require<'a>(src: &'a Option<DataSource>, what: &str) -> Result<&'a DataSource> {
    src.as_ref().ok_or_else(|| config_err(format!("data.{what} is required")))
}

fn require_checkpoint(cfg: &RunConfig) -> Result<&Path> {
    cfg.checkpoint.as_deref().ok_or_else(|| config_err("`checkpoint` is required"))
}

/// Stream used for posterior sampling after training, kept apart from the
/// training stream.
fn eval_rng(seed: u64) -> circspec_core::rng::StreamRng {
    use circspec_core::rng::SeedableRng;
    let mut rng = circspec_core::rng::StreamRng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

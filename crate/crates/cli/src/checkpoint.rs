//! Checkpoints: `manifest.json` plus `params.bin`, a sequence of
//! little-endian f64 blocks in manifest order.

use std::fs;
use std::path::Path;

use circspec_core::rng::{SeedableRng, StreamRng};
use circspec_core::svi::{AdamState, Model, Trainer};
use serde::{Deserialize, Serialize};

use crate::config::{ArchConfig, RunConfig};
use crate::error::{io_err, CliError, Result};
use crate::output::write_json;

pub const CHECKPOINT_FORMAT: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    /// 32-byte ChaCha key, hex.
    pub seed: String,
    /// Decimal strings: the values exceed what JSON numbers carry exactly.
    pub stream: String,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &StreamRng) -> Self {
        Self {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream().to_string(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<StreamRng> {
        let bad = |what: &str| CliError::Checkpoint(format!("bad rng {what}"));
        let key: [u8; 32] = hex::decode(&self.seed)
            .map_err(|_| bad("seed"))?
            .try_into()
            .map_err(|_| bad("seed length"))?;
        let mut rng = StreamRng::from_seed(key);
        rng.set_stream(self.stream.parse().map_err(|_| bad("stream"))?);
        rng.set_word_pos(self.word_pos.parse().map_err(|_| bad("word_pos"))?);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub architecture: ArchConfig,
    pub classes: usize,
    pub spectral_dim: usize,
    pub rank: usize,
    pub guide_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    /// Offset and length in f64 values.
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub format_version: u32,
    pub config_digest: String,
    pub model_digest: String,
    pub training_digest: String,
    pub seed: u64,
    pub step: u64,
    pub adam_t: u64,
    pub rng: RngState,
    pub layout: Layout,
    pub params_file: String,
    pub blocks: Vec<Block>,
}

impl Manifest {
    fn block(&self, name: &str) -> Result<&Block> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| CliError::Checkpoint(format!("missing block `{name}`")))
    }
}

/// Writes `trainer` under `dir`.
pub fn save(dir: &Path, trainer: &Trainer, config: &RunConfig, config_digest: &str) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let g = &trainer.guides;
    let mut blocks = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut push = |name: &str, data: &[f64]| {
        blocks.push(Block { name: name.to_string(), offset: values.len(), len: data.len() });
        values.extend_from_slice(data);
    };
    let flat = g.to_flat();
    let mut off = 0;
    for (name, len) in g.blocks() {
        push(name, &flat[off..off + len]);
        off += len;
    }
    push("adam.m", &trainer.adam.m);
    push("adam.v", &trainer.adam.v);
    push("elbo_trace", &trainer.trace);
    let manifest = Manifest {
        schema: "circspec.checkpoint".into(),
        format_version: CHECKPOINT_FORMAT,
        config_digest: config_digest.to_string(),
        model_digest: config.model_digest(),
        training_digest: config.training_digest(),
        seed: config.seed,
        step: trainer.step,
        adam_t: trainer.adam.t,
        rng: RngState::capture(&trainer.rng),
        layout: Layout {
            architecture: config.model.architecture.clone(),
            classes: config.model.classes,
            spectral_dim: g.spectral.dim(),
            rank: g.spectral.rank(),
            guide_len: g.len(),
        },
        params_file: PARAMS_FILE.into(),
        blocks,
    };
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    let params = dir.join(PARAMS_FILE);
    fs::write(&params, bytes).map_err(io_err(&params))?;
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))?;
    if m.format_version != CHECKPOINT_FORMAT {
        return Err(CliError::Checkpoint(format!("unsupported format version {}", m.format_version)));
    }
    Ok(m)
}

/// Restores a trainer for `model`; the caller checks digests.
pub fn load(dir: &Path, model: Model) -> Result<(Manifest, Trainer)> {
    let m = read_manifest(dir)?;
    let path = dir.join(&m.params_file);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    if bytes.len() % 8 != 0 {
        return Err(CliError::Checkpoint(format!("{}: length is not a multiple of 8", path.display())));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let slice = |name: &str| -> Result<&[f64]> {
        let b = m.block(name)?;
        values
            .get(b.offset..b.offset + b.len)
            .ok_or_else(|| CliError::Checkpoint(format!("block `{name}` runs past the end of {}", m.params_file)))
    };
    // Shapes come from a fresh initialisation; the values are overwritten.
    let mut trainer = Trainer::new(model, StreamRng::seed_from_u64(0))?;
    let expected = trainer.guides.blocks();
    let mut flat = Vec::with_capacity(trainer.guides.len());
    for (name, len) in &expected {
        let s = slice(name)?;
        if s.len() != *len {
            return Err(CliError::Checkpoint(format!("block `{name}` has {} values, the model needs {len}", s.len())));
        }
        flat.extend_from_slice(s);
    }
    trainer.guides.set_flat(&flat)?;
    let (am, av) = (slice("adam.m")?, slice("adam.v")?);
    if am.len() != flat.len() || av.len() != flat.len() {
        return Err(CliError::Checkpoint("optimizer state does not match the guide length".into()));
    }
    trainer.adam = AdamState { m: am.to_vec(), v: av.to_vec(), t: m.adam_t };
    trainer.trace = slice("elbo_trace")?.to_vec();
    trainer.rng = m.rng.restore()?;
    trainer.step = m.step;
    Ok((m, trainer))
}

/// Loads `dir` and checks that it was produced for `config`'s model.
pub fn load_for(dir: &Path, model: Model, config: &RunConfig) -> Result<(Manifest, Trainer)> {
    if read_manifest(dir)?.model_digest != config.model_digest() {
        return Err(CliError::Checkpoint(
            "model, prior or guide settings differ from the ones the checkpoint was trained with".into(),
        ));
    }
    load(dir, model)
}

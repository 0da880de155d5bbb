//! Run configuration: one JSON document per run.

use std::fs;
use std::path::{Path, PathBuf};

use circspec_core::layers::LayerSpec;
use circspec_core::svi::{AdamHyper, AlphaMode, Architecture, ModelSpec, PriorSpec, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{config_err, io_err, Result};

pub const CONFIG_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelConfig,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub guide: GuideConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub data: DataConfig,
    /// Checkpoint directory read by `certify` and `eval`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Checkpoint directory `train` continues from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resume: Option<PathBuf>,
    #[serde(default)]
    pub sample_prior: SamplePriorConfig,
    #[serde(default)]
    pub certify: CertifyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_count: Option<ParamCountConfig>,
}

fn default_schema() -> u32 {
    CONFIG_SCHEMA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: ArchConfig,
    pub classes: usize,
    #[serde(default = "yes")]
    pub layer_bias: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArchConfig {
    /// `active`: number of lowest half-spectrum bins kept (all if absent).
    Spectral1d {
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        active: Option<usize>,
    },
    /// `radial_cutoff`: keep bins with normalised radius at most this.
    Bccb2d {
        rows: usize,
        cols: usize,
        channels: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radial_cutoff: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub sigma0_sq: f64,
    pub alpha: AlphaConfig,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { sigma0_sq: 1.0, alpha: AlphaConfig::Learned { init: 1.0 } }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaConfig {
    Fixed { value: f64 },
    Learned { init: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuideConfig {
    pub rank: usize,
    pub eps: f64,
}

impl Default for GuideConfig {
    fn default() -> Self {
        Self {
            rank: circspec_core::svi::guide::DEFAULT_RANK,
            eps: circspec_core::svi::guide::DEFAULT_EPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: usize,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let a = AdamHyper::default();
        let t = TrainConfig::default();
        Self { lr: a.lr, beta1: a.beta1, beta2: a.beta2, eps: a.eps, steps: t.steps, batch_size: t.batch_size }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    /// Reparameterised draws per ELBO estimate.
    pub train_samples: usize,
    /// Posterior draws averaged for predictive probabilities.
    pub predictive_samples: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { train_samples: 1, predictive_samples: 32 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<DataSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<DataSource>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ood: Vec<DataSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    /// Header row with feature columns and a `label` column.
    Csv {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    /// Little-endian f32 block; sidecar defaults to `<path>.json`.
    F32 {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sidecar: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
}

impl DataSource {
    /// Display name: explicit `name`, else the main file stem.
    pub fn name(&self) -> String {
        let (explicit, path) = match self {
            DataSource::Idx { name, images, .. } => (name, images),
            DataSource::Csv { name, path } | DataSource::F32 { name, path, .. } => (name, path),
        };
        explicit.clone().unwrap_or_else(|| {
            path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
        })
    }

    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            DataSource::Idx { images, labels, .. } => vec![images, labels],
            DataSource::Csv { path, .. } => vec![path],
            DataSource::F32 { path, sidecar, .. } => {
                let mut v = vec![path];
                v.extend(sidecar.as_mut());
                v
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplePriorConfig {
    /// Filters (or fields) written to `filters.csv`.
    pub count: usize,
    /// Draws behind the empirical covariance column.
    pub covariance_samples: usize,
}

impl Default for SamplePriorConfig {
    fn default() -> Self {
        Self { count: 16, covariance_samples: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyConfig {
    /// Failure probability for the prior tail radius.
    pub delta: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self { delta: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamCountConfig {
    pub rows: Vec<ParamRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRow {
    pub name: String,
    pub layers: Vec<LayerConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerConfig {
    #[serde(rename = "spectral_circulant_1d")]
    SpectralCirculant1d {
        d: usize,
        #[serde(default)]
        active: Option<usize>,
        #[serde(default = "yes")]
        bias: bool,
    },
    #[serde(rename = "spectral_bccb_2d")]
    SpectralBccb2d {
        cout: usize,
        cin: usize,
        rows: usize,
        cols: usize,
        #[serde(default)]
        radial_cutoff: Option<f64>,
        #[serde(default = "yes")]
        bias: bool,
    },
    SpatialBccb {
        cout: usize,
        cin: usize,
        rows: usize,
        cols: usize,
        #[serde(default = "yes")]
        bias: bool,
    },
    Conv2d {
        cout: usize,
        cin: usize,
        kernel: usize,
        #[serde(default = "yes")]
        bias: bool,
    },
    Dense {
        inputs: usize,
        outputs: usize,
        #[serde(default = "yes")]
        bias: bool,
    },
}

impl From<&LayerConfig> for LayerSpec {
    fn from(l: &LayerConfig) -> Self {
        match *l {
            LayerConfig::SpectralCirculant1d { d, active, bias } => LayerSpec::SpectralCirculant1d { d, active, bias },
            LayerConfig::SpectralBccb2d { cout, cin, rows, cols, radial_cutoff, bias } => {
                LayerSpec::SpectralBccb2d { cout, cin, rows, cols, radial_cutoff, bias }
            }
            LayerConfig::SpatialBccb { cout, cin, rows, cols, bias } => LayerSpec::SpatialBccb { cout, cin, rows, cols, bias },
            LayerConfig::Conv2d { cout, cin, kernel, bias } => LayerSpec::Conv2d { cout, cin, kernel, bias },
            LayerConfig::Dense { inputs, outputs, bias } => LayerSpec::Dense { inputs, outputs, bias },
        }
    }
}

/// A parsed config together with its digest and base directory.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    /// Paths already resolved against the config file's directory.
    pub config: RunConfig,
    /// SHA-256 of the canonical JSON of the config as written, after any
    /// seed override.
    pub digest: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn canonical_digest<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("config serialises"))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        if cfg.schema_version != CONFIG_SCHEMA {
            return Err(config_err(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Reads `path`, applies `seed`, digests, then resolves relative paths.
    pub fn load(path: &Path, seed: Option<u64>) -> Result<LoadedConfig> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut config = Self::from_json(&text)?;
        if let Some(s) = seed {
            config.seed = s;
        }
        let digest = canonical_digest(&config);
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.resolve_paths(&base)?;
        Ok(LoadedConfig { config, digest })
    }

    fn resolve_paths(&mut self, base: &Path) -> Result<()> {
        let mut paths: Vec<&mut PathBuf> = Vec::new();
        for src in self.data.train.iter_mut().chain(self.data.test.iter_mut()).chain(self.data.ood.iter_mut()) {
            paths.extend(src.paths_mut());
        }
        paths.extend(self.checkpoint.as_mut());
        paths.extend(self.resume.as_mut());
        for p in paths {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.exists() {
                return Err(config_err(format!("referenced path does not exist: {}", p.display())));
            }
        }
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        let arch = match self.model.architecture {
            ArchConfig::Spectral1d { dim, active } => Architecture::Spectral1d { dim, active },
            ArchConfig::Bccb2d { rows, cols, channels, radial_cutoff } => {
                Architecture::Bccb2d { rows, cols, channels, radial_cutoff }
            }
        };
        let alpha = match self.prior.alpha {
            AlphaConfig::Fixed { value } => AlphaMode::Fixed(value),
            AlphaConfig::Learned { init } => AlphaMode::Learned { init },
        };
        ModelSpec {
            arch,
            classes: self.model.classes,
            prior: PriorSpec { sigma0_sq: self.prior.sigma0_sq, alpha },
            rank: self.guide.rank,
            eps: self.guide.eps,
            layer_bias: self.model.layer_bias,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let o = &self.optimizer;
        TrainConfig {
            steps: o.steps,
            batch_size: o.batch_size,
            n_mc: self.mc.train_samples,
            adam: AdamHyper { lr: o.lr, beta1: o.beta1, beta2: o.beta2, eps: o.eps },
        }
    }

    /// Digest of everything that determines the parameter layout.
    pub fn model_digest(&self) -> String {
        canonical_digest(&(&self.model, &self.prior, &self.guide))
    }

    /// Digest of everything a resumed run must share with the original,
    /// which excludes the step budget.
    pub fn training_digest(&self) -> String {
        let o = &self.optimizer;
        canonical_digest(&(
            self.model_digest(),
            self.seed,
            (o.lr, o.beta1, o.beta2, o.eps, o.batch_size),
            self.mc.train_samples,
            self.data.train.as_ref().map(DataSource::name),
        ))
    }
}

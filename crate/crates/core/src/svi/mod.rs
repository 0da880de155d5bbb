//! Stochastic variational inference over effective spectral coordinates.

pub mod adam;
pub mod guide;
pub mod kl;
pub mod model;
pub mod train;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use guide::{LowRankGaussian, LowRankParams, MeanFieldGaussian};
pub use kl::{kl_lowrank_diag, kl_lowrank_diag_grad, LowRankView};
pub use model::{
    accuracy, predictive_probs, AlphaMode, Architecture, Batch, ElboTerms, Guides, Model, ModelSpec,
    Network, Noise, PointParams, PriorSpec, SpectralLayer,
};
pub use train::{synthetic_separable, Dataset, TrainConfig, Trainer};

//! Command-line front end for `circspec-core`: JSON run configs, dataset
//! loaders (IDX, CSV, f32 blocks), checkpoints and the five workflows.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod output;

pub use commands::{run, Command};
pub use error::{CliError, Result};

use std::path::PathBuf;

use serde_json::json;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {message} (byte offset {offset})")]
    Idx { path: PathBuf, offset: u64, message: String },
    #[error("{path}: row {row}: {message}")]
    Row { path: PathBuf, row: usize, message: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Core(#[from] circspec_core::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Config(_) => "config",
            CliError::Idx { .. } => "idx",
            CliError::Row { .. } => "row",
            CliError::Format { .. } => "format",
            CliError::Checkpoint(_) => "checkpoint",
            CliError::Core(circspec_core::Error::Diverged { .. }) => "diverged",
            CliError::Core(_) => "numeric",
        }
    }

    /// Machine-readable form printed on stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({ "error": { "kind": self.kind(), "message": self.to_string() } });
        match self {
            CliError::Idx { offset, .. } => v["error"]["offset"] = json!(offset),
            CliError::Row { row, .. } => v["error"]["row"] = json!(row),
            CliError::Core(circspec_core::Error::Diverged { step, trace }) => {
                v["error"]["step"] = json!(step);
                v["error"]["trace"] = json!(trace.iter().map(|x| if x.is_finite() { json!(x) } else { json!(x.to_string()) }).collect::<Vec<_>>());
            }
            _ => {}
        }
        v
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}

pub(crate) fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

//! Schema-versioned CSV/JSON artefacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{io_err, CliError, Result};

pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let csv_err = |e: csv::Error| CliError::Format { path: path.to_path_buf(), message: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serialisable output");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Tracks the files a command writes and emits `outputs.json`.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    command: &'static str,
    config_digest: String,
    files: Vec<Value>,
}

impl OutputDir {
    pub fn create(root: &Path, command: &'static str, config_digest: &str) -> Result<Self> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        Ok(Self { root: root.to_path_buf(), command, config_digest: config_digest.to_string(), files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn register(&mut self, name: &str, schema: &str) {
        self.files.push(json!({ "path": name, "schema": schema, "schema_version": OUTPUT_SCHEMA_VERSION }));
    }

    pub fn csv(&mut self, name: &str, schema: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        write_csv(&self.path(name), header, rows)?;
        self.register(name, schema);
        Ok(())
    }

    /// Writes `body` with `schema`, `schema_version` and `config_digest`
    /// merged in at the top level.
    pub fn json(&mut self, name: &str, schema: &str, body: Value) -> Result<()> {
        let mut doc = json!({
            "schema": schema,
            "schema_version": OUTPUT_SCHEMA_VERSION,
            "config_digest": self.config_digest,
        });
        if let (Some(d), Value::Object(b)) = (doc.as_object_mut(), body) {
            d.extend(b);
        }
        write_json(&self.path(name), &doc)?;
        self.register(name, schema);
        Ok(())
    }

    /// Records a file written by other means (for example a checkpoint).
    pub fn record(&mut self, name: &str, schema: &str) {
        self.register(name, schema);
    }

    /// Writes `outputs.json` and returns its contents.
    pub fn finish(self) -> Result<Value> {
        let doc = json!({
            "schema": "circspec.outputs",
            "schema_version": OUTPUT_SCHEMA_VERSION,
            "command": self.command,
            "config_digest": self.config_digest,
            "files": self.files,
        });
        write_json(&self.root.join("outputs.json"), &doc)?;
        Ok(doc)
    }
}

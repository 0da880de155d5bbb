use std::path::Path;

use circspec_core::layers::{param_count as count, LayerSpec};
use circspec_core::svi::Model;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::Result;
use crate::output::OutputDir;

/// Counts the configured table rows, or the run's own model when the
/// config lists none.
pub fn param_count(cfg: &RunConfig, digest: &str, out: &Path) -> Result<Value> {
    let rows: Vec<(String, Vec<LayerSpec>)> = match &cfg.param_count {
        Some(pc) => pc.rows.iter().map(|r| (r.name.clone(), r.layers.iter().map(LayerSpec::from).collect())).collect(),
        None => vec![("model".into(), Model::new(cfg.model_spec())?.layer_specs())],
    };
    let mut table = Vec::with_capacity(rows.len());
    for (name, layers) in &rows {
        let pc = count(layers)?;
        table.push((name.clone(), pc));
    }
    let mut dir = OutputDir::create(out, "param-count", digest)?;
    dir.csv(
        "param_count.csv",
        "circspec.param_count",
        &["name", "weights", "biases", "total"],
        table.iter().map(|(n, pc)| vec![n.clone(), pc.weights.to_string(), pc.biases.to_string(), pc.total().to_string()]),
    )?;
    dir.json(
        "param_count.json",
        "circspec.param_count",
        json!({
            "rows": table
                .iter()
                .map(|(n, pc)| json!({ "name": n, "weights": pc.weights, "biases": pc.biases, "total": pc.total() }))
                .collect::<Vec<_>>(),
        }),
    )?;
    dir.finish()
}

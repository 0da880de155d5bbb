#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use circspec_core::rng::{SeedableRng, StreamRng};
use circspec_core::svi::synthetic_separable;
use serde_json::{json, Value};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_circspec"))
}

pub fn run(cmd: &str, config: &Path, out: &Path, seed: Option<u64>) -> Output {
    let mut c = bin();
    c.arg(cmd).arg("--config").arg(config).arg("--out").arg(out);
    if let Some(s) = seed {
        c.arg("--seed").arg(s.to_string());
    }
    c.output().expect("spawn circspec")
}

pub fn run_ok(cmd: &str, config: &Path, out: &Path) -> Value {
    let o = run(cmd, config, out, None);
    assert!(o.status.success(), "{cmd} failed: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

pub fn write_csv(path: &Path, x: &[f64], labels: &[usize], dim: usize) {
    let mut w = csv::Writer::from_path(path).unwrap();
    let mut header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    header.push("label".into());
    w.write_record(&header).unwrap();
    for (row, y) in x.chunks_exact(dim).zip(labels) {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        rec.push(y.to_string());
        w.write_record(&rec).unwrap();
    }
    w.flush().unwrap();
}

/// Writes train/test/ood CSVs for the two-class synthetic task and a
/// config referencing them; returns the config path.
pub fn synthetic_setup(dir: &Path, dim: usize, steps: usize, extra: Value) -> PathBuf {
    let mut rng = StreamRng::seed_from_u64(77);
    let (x, y) = synthetic_separable(128, dim, 0.3, &mut rng);
    write_csv(&dir.join("train.csv"), &x, &y, dim);
    let (xt, yt) = synthetic_separable(64, dim, 0.3, &mut rng);
    write_csv(&dir.join("test.csv"), &xt, &yt, dim);
    let noise: Vec<f64> = (0..64 * dim).map(|_| 0.3 * circspec_core::rng::standard_normal(&mut rng)).collect();
    write_csv(&dir.join("noise.csv"), &noise, &vec![0; 64], dim);
    let mut cfg = json!({
        "seed": 5,
        "model": { "architecture": { "kind": "spectral1d", "dim": dim }, "classes": 2 },
        "guide": { "rank": 3 },
        "optimizer": { "steps": steps, "batch_size": 32 },
        "mc": { "train_samples": 1, "predictive_samples": 8 },
        "data": {
            "train": { "format": "csv", "path": "train.csv" },
            "test": { "format": "csv", "path": "test.csv" },
            "ood": [{ "format": "csv", "path": "noise.csv" }]
        },
        "sample_prior": { "count": 4, "covariance_samples": 200 }
    });
    if let (Some(c), Value::Object(e)) = (cfg.as_object_mut(), extra) {
        c.extend(e);
    }
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

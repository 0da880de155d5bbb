mod common;

use std::fs;

use circspec::checkpoint;
use circspec::config::RunConfig;
use circspec_core::rng::{SeedableRng, StreamRng};
use circspec_core::svi::{Model, Trainer};
use common::*;
use serde_json::{json, Value};

fn repo_config(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn param_count_reproduces_tables() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok("param-count", &repo_config("mnist_param_count.json"), tmp.path());
    let csv = fs::read_to_string(tmp.path().join("param_count.csv")).unwrap();
    assert_eq!(csv, "name,weights,biases,total\nmodel,8624,11,8635\n");

    run_ok("param-count", &repo_config("param_tables.json"), tmp.path());
    let doc = read_json(&tmp.path().join("param_count.json"));
    let got: Vec<(String, u64, u64)> = doc["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["name"].as_str().unwrap().to_string(), r["weights"].as_u64().unwrap(), r["biases"].as_u64().unwrap()))
        .collect();
    let expect = [
        ("mnist/spectral_circulant", 8624, 11),
        ("mnist/spectral_bccb", 8624, 11),
        ("mnist/spatial_bccb", 8624, 11),
        ("mnist/conv3x3_8", 62_792, 18),
        ("mnist/dense_784", 622_496, 794),
        ("rfft_head/K=1025", 22_528, 10),
        ("rfft_head/K=768", 22_015, 10),
        ("rfft_head/K=512", 21_503, 10),
        ("rfft_head/K=256", 20_991, 10),
        ("rfft_head/K=128", 20_735, 10),
        ("rfft_head/K=64", 20_607, 10),
    ];
    assert_eq!(got.len(), expect.len());
    for ((n, w, b), (en, ew, eb)) in got.iter().zip(expect) {
        assert_eq!((n.as_str(), *w, *b), (en, ew, eb));
    }
    assert_eq!(doc["schema_version"], 1);
    assert!(doc["config_digest"].as_str().unwrap().len() == 64);
}

#[test]
fn zero_step_checkpoint_is_the_initialisation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synthetic_setup(tmp.path(), 8, 0, json!({}));
    run_ok("train", &cfg, &tmp.path().join("run"));
    let loaded = RunConfig::load(&cfg, None).unwrap();
    let model = Model::new(loaded.config.model_spec()).unwrap();
    let fresh = Trainer::new(model.clone(), StreamRng::seed_from_u64(5)).unwrap();
    let (m, restored) = checkpoint::load(&tmp.path().join("run/checkpoint"), model).unwrap();
    assert_eq!(m.step, 0);
    let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
    assert_eq!(bits(restored.guides.to_flat()), bits(fresh.guides.to_flat()));
    assert_eq!(restored.rng, fresh.rng);
    let trace = fs::read_to_string(tmp.path().join("run/elbo_trace.csv")).unwrap();
    assert_eq!(trace, "step,elbo\n");
}

fn files_equal(a: &std::path::Path, b: &std::path::Path, names: &[&str]) {
    for n in names {
        assert!(fs::read(a.join(n)).unwrap() == fs::read(b.join(n)).unwrap(), "{n} differs");
    }
}

#[test]
fn training_is_deterministic_and_resumable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synthetic_setup(tmp.path(), 8, 12, json!({}));
    run_ok("train", &cfg, &tmp.path().join("a"));
    run_ok("train", &cfg, &tmp.path().join("b"));
    let names = ["checkpoint/manifest.json", "checkpoint/params.bin", "elbo_trace.csv"];
    files_equal(&tmp.path().join("a"), &tmp.path().join("b"), &names);

    let mut doc = read_json(&cfg);
    doc["optimizer"]["steps"] = json!(5);
    let part = tmp.path().join("part.json");
    fs::write(&part, doc.to_string()).unwrap();
    run_ok("train", &part, &tmp.path().join("part"));
    let resume = tmp.path().join("resume.json");
    let mut doc = read_json(&cfg);
    doc["resume"] = json!("part/checkpoint");
    fs::write(&resume, doc.to_string()).unwrap();
    run_ok("train", &resume, &tmp.path().join("c"));
    let (a, c) = (tmp.path().join("a"), tmp.path().join("c"));
    files_equal(&a, &c, &["checkpoint/params.bin", "elbo_trace.csv"]);
    let (ma, mc) = (read_json(&a.join("checkpoint/manifest.json")), read_json(&c.join("checkpoint/manifest.json")));
    assert_eq!(ma["rng"], mc["rng"]);
    assert_eq!(ma["training_digest"], mc["training_digest"]);

    let o = run("train", &cfg, &tmp.path().join("d"), Some(6));
    assert!(o.status.success());
    assert!(fs::read(tmp.path().join("a/checkpoint/params.bin")).unwrap() != fs::read(tmp.path().join("d/checkpoint/params.bin")).unwrap());
}

#[test]
fn resume_rejects_changed_settings() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synthetic_setup(tmp.path(), 8, 2, json!({}));
    run_ok("train", &cfg, &tmp.path().join("a"));
    let mut doc = read_json(&cfg);
    doc["resume"] = json!("a/checkpoint");
    doc["optimizer"]["lr"] = json!(0.5);
    doc["optimizer"]["steps"] = json!(4);
    let p = tmp.path().join("drift.json");
    fs::write(&p, doc.to_string()).unwrap();
    let o = run("train", &p, &tmp.path().join("b"), None);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "checkpoint");
}

#[test]
fn train_certify_eval_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synthetic_setup(tmp.path(), 16, 150, json!({ "checkpoint": "run/checkpoint" }));
    // The checkpoint path must exist at load, so train from a copy without it.
    let mut train_doc = read_json(&cfg);
    train_doc.as_object_mut().unwrap().remove("checkpoint");
    let train_cfg = tmp.path().join("train.json");
    fs::write(&train_cfg, train_doc.to_string()).unwrap();
    run_ok("train", &train_cfg, &tmp.path().join("run"));

    let out = run_ok("certify", &cfg, &tmp.path().join("cert"));
    assert_eq!(out["command"], "certify");
    let summary = read_json(&tmp.path().join("cert/cert_report.json"));
    let l = summary["lipschitz"]["product"].as_f64().unwrap();
    assert!(l > 0.0 && l.is_finite());
    assert!(summary["correct"].as_u64().unwrap() >= 60);
    assert!(summary["prior_tail"]["product"].as_f64().unwrap() > 0.0);
    let report = fs::read_to_string(tmp.path().join("cert/cert_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 65);
    assert!(report.starts_with("index,label,margin,radius\n"));

    run_ok("eval", &cfg, &tmp.path().join("eval"));
    let m = read_json(&tmp.path().join("eval/metrics.json"));
    assert_eq!(m["schema"], "circspec.metrics");
    assert!(m["id"]["accuracy"].as_f64().unwrap() > 0.9);
    assert_eq!(m["ood"][0]["name"], "noise");
    let auroc = m["ood"][0]["auroc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auroc));
    assert_eq!(m["ood_mean"]["auroc"], m["ood"][0]["auroc"]);
    let ent = fs::read_to_string(tmp.path().join("eval/entropy.csv")).unwrap();
    assert_eq!(ent.lines().count(), 1 + 64 + 64);
    let outputs = read_json(&tmp.path().join("eval/outputs.json"));
    assert_eq!(outputs["config_digest"], m["config_digest"]);
}

#[test]
fn sample_prior_writes_filters_and_covariance() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synthetic_setup(tmp.path(), 8, 0, json!({}));
    run_ok("sample-prior", &cfg, &tmp.path().join("prior"));
    let filters = fs::read_to_string(tmp.path().join("prior/filters.csv")).unwrap();
    assert_eq!(filters.lines().count(), 5);
    assert_eq!(filters.lines().next().unwrap().split(',').count(), 9);
    let mut rdr = csv::Reader::from_path(tmp.path().join("prior/covariance.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 8);
    for r in &rows {
        let (k, e, se): (f64, f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap(), r[3].parse().unwrap());
        assert!((k - e).abs() < 5.0 * se, "lag {}: {k} vs {e} +- {se}", &r[0]);
    }

    let doc2d = json!({ "model": { "architecture": { "kind": "bccb2d", "rows": 4, "cols": 4, "channels": 1 }, "classes": 2 },
                        "prior": { "alpha": { "mode": "fixed", "value": 2.0 } },
                        "sample_prior": { "count": 2, "covariance_samples": 50 } });
    let p = tmp.path().join("p2.json");
    fs::write(&p, doc2d.to_string()).unwrap();
    run_ok("sample-prior", &p, &tmp.path().join("prior2"));
    let cov = fs::read_to_string(tmp.path().join("prior2/covariance.csv")).unwrap();
    assert!(cov.starts_with("lag_row,lag_col,closed_form,empirical,std_error\n"));
    assert_eq!(cov.lines().count(), 17);
}

#[test]
fn errors_are_machine_readable() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{\"model\": 3}").unwrap();
    let o = run("train", &bad, tmp.path(), None);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");

    let o = run("train", &tmp.path().join("missing.json"), tmp.path(), None);
    assert_eq!(o.status.code(), Some(1));

    let cfg = synthetic_setup(tmp.path(), 8, 0, json!({}));
    let o = run("eval", &cfg, &tmp.path().join("e"), None);
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(err["error"]["message"].as_str().unwrap().contains("checkpoint"));

    let wrong_dim = synthetic_setup(tmp.path(), 8, 1, json!({ "model": { "architecture": { "kind": "spectral1d", "dim": 9 }, "classes": 2 } }));
    let o = run("train", &wrong_dim, &tmp.path().join("w"), None);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "format");
}

#[test]
fn usage_errors_exit_2() {
    let o = bin().arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    let o = bin().arg("train").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

//! Black-box tests of the `cate` binary: artifact layout, the exit-code
//! contract, and the command-level equivalences cheap enough to check on
//! small runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

use cate_core::io::save_model;
use cate_core::model::{LinearCateModel, TrainedModel};

fn cate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cate")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = cate(args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(args: &[&str]) -> i32 {
    cate(args).status.code().expect("terminated by exit, not signal")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap_or_else(|e| panic!("{path:?}: {e}")))
        .expect("valid json")
}

/// Manifest with the wall-clock field stripped; everything else must be
/// reproducible.
fn manifest_sans_time(path: &Path) -> Value {
    let mut v = read_json(path);
    v.as_object_mut().expect("object").remove("created_unix").expect("created_unix present");
    v
}

fn write_config(dir: &Path, value: &Value) -> PathBuf {
    let path = dir.join("run.json");
    fs::write(&path, value.to_string()).unwrap();
    path
}

/// Small synthetic dataset for tests that train; returns the dataset path.
fn small_dataset(dir: &Path, n: &str, seed: &str) -> PathBuf {
    let out = dir.join(format!("data-{seed}"));
    ok(&["--seed", seed, "--out", out.to_str().unwrap(), "generate", "--n", n]);
    out.join("dataset.json")
}

#[test]
fn generate_writes_the_default_dataset_deterministically() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        ok(&["--seed", "7", "--out", out.to_str().unwrap(), "generate"]);
    }

    let csv = fs::read_to_string(a.join("data.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1001, "header plus one row per sample");
    let schema = read_json(&a.join("schema.json"));
    assert_eq!(schema["treatments"].as_array().unwrap().len(), 10);

    for file in ["data.csv", "dataset.json", "schema.json"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file} differs between identical runs"
        );
    }
    let ma = manifest_sans_time(&a.join("manifest.json"));
    let mb = manifest_sans_time(&b.join("manifest.json"));
    assert_eq!(ma, mb);
    assert_eq!(ma["dataset_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn config_problems_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = out.to_str().unwrap();

    // Split degenerates below 10 samples.
    assert_eq!(exit_code(&["--out", o, "generate", "--n", "5"]), 2);

    // Unknown keys in the config document are refused, not ignored.
    let cfg = write_config(tmp.path(), &json!({ "not_a_section": 1 }));
    assert_eq!(exit_code(&["--config", cfg.to_str().unwrap(), "--out", o, "generate"]), 2);

    // Missing config file is a config error too.
    assert_eq!(exit_code(&["--config", "/nonexistent/run.json", "--out", o, "generate"]), 2);
}

#[test]
fn data_problems_exit_3() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = out.to_str().unwrap();

    // Missing dataset and missing snapshot are data errors, distinct from
    // the config exit code.
    assert_eq!(exit_code(&["--out", o, "train", "--data", "/nonexistent/d.json"]), 3);
    let data = small_dataset(tmp.path(), "60", "1");
    assert_eq!(
        exit_code(&[
            "--out",
            o,
            "eval",
            "--data",
            data.to_str().unwrap(),
            "--model",
            "/nonexistent/m.snapshot",
        ]),
        3
    );

    // Unsupported dataset extension.
    let txt = tmp.path().join("d.txt");
    fs::write(&txt, "not a dataset").unwrap();
    assert_eq!(exit_code(&["--out", o, "train", "--data", txt.to_str().unwrap()]), 3);
}

#[test]
fn plain_mode_equals_zero_weight_contrastive() {
    let tmp = TempDir::new().unwrap();
    let data = small_dataset(tmp.path(), "300", "5");
    let d = data.to_str().unwrap();

    let mut metrics = Vec::new();
    for (name, extra) in [("plain", vec![]), ("w0", vec!["--weight", "0"])] {
        let mdir = tmp.path().join(name);
        let mut args = vec!["--seed", "5", "--out", mdir.to_str().unwrap(), "train", "--data", d];
        args.extend(["--mode", if name == "plain" { "plain" } else { "contrastive" }]);
        args.extend(["--epochs", "60"]);
        args.extend(extra);
        ok(&args);

        let edir = tmp.path().join(format!("{name}-eval"));
        ok(&[
            "--seed",
            "5",
            "--out",
            edir.to_str().unwrap(),
            "eval",
            "--data",
            d,
            "--model",
            mdir.join("model.snapshot").to_str().unwrap(),
        ]);
        metrics.push(fs::read(edir.join("metrics.json")).unwrap());
    }
    assert_eq!(metrics[0], metrics[1], "zero triplet weight must not change the fit");
}

#[test]
fn train_writes_log_with_both_loss_columns_and_provenance_defaults() {
    let tmp = TempDir::new().unwrap();
    let data = small_dataset(tmp.path(), "200", "2");
    let out = tmp.path().join("train");
    ok(&[
        "--seed",
        "2",
        "--out",
        out.to_str().unwrap(),
        "train",
        "--data",
        data.to_str().unwrap(),
        "--epochs",
        "40",
    ]);

    let log = fs::read_to_string(out.join("train_log.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("epoch,huber,triplet,n_triples"));
    assert_eq!(lines.count(), 40, "one row per epoch");
    let last = log.lines().last().unwrap();
    let triples: usize = last.rsplit(',').next().unwrap().parse().unwrap();
    assert!(triples > 0, "contrastive training should mine triples: {last}");

    // Generated synthetic data picks the 0.1 / 30 loss settings.
    let manifest = read_json(&out.join("manifest.json"));
    let tc = &manifest["config"]["effective_train"];
    assert_eq!(tc["contrastive_weight"], json!(0.1));
    assert_eq!(tc["margin"], json!(30.0));
}

#[test]
fn oracle_snapshot_scores_zero_and_probes_clean() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &json!({ "scm": { "y_noise_std": 0.0, "seed": 11 } }));
    let c = cfg.to_str().unwrap();
    let gen = tmp.path().join("gen");
    ok(&["--config", c, "--out", gen.to_str().unwrap(), "generate", "--n", "400"]);
    let data = gen.join("dataset.json");

    // The generator's outcome is exactly sum(mask * t) + sum(x) without
    // noise, so these weights predict it perfectly.
    let mut w_t = vec![1.0; 5];
    w_t.extend([0.0; 5]);
    let oracle = TrainedModel::Linear(LinearCateModel { w_t, w_x: vec![1.0; 10], bias: 0.0 });
    let snapshot = tmp.path().join("oracle.snapshot");
    save_model(&oracle, &snapshot).unwrap();

    let eval = tmp.path().join("eval");
    ok(&[
        "--config",
        c,
        "--out",
        eval.to_str().unwrap(),
        "eval",
        "--data",
        data.to_str().unwrap(),
        "--model",
        snapshot.to_str().unwrap(),
    ]);
    let report = read_json(&eval.join("metrics.json"));
    for metric in ["mae", "rmse", "pehe"] {
        let v = report[metric].as_f64().unwrap();
        assert!(v.abs() < 1e-10, "{metric} should vanish for the oracle, got {v}");
    }

    let probe = tmp.path().join("probe");
    ok(&[
        "--config",
        c,
        "--out",
        probe.to_str().unwrap(),
        "probe",
        "--model",
        snapshot.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    let p = read_json(&probe.join("probe.json"));
    assert!(p["r2_causal"].as_f64().unwrap() > 0.999999);
    assert!(p["r2_noncausal"].as_f64().unwrap() < 0.2);
    // The oracle zeroes non-causal columns, so perturbations cannot move it.
    assert_eq!(p["invariance_ratio"].as_f64().unwrap(), 0.0);
}

#[test]
fn constant_representation_makes_probe_a_numeric_error() {
    let tmp = TempDir::new().unwrap();
    let data = small_dataset(tmp.path(), "60", "3");
    let snapshot = tmp.path().join("zeros.snapshot");
    save_model(&TrainedModel::Linear(LinearCateModel::zeros(10, 10)), &snapshot).unwrap();

    let out = tmp.path().join("probe");
    assert_eq!(
        exit_code(&[
            "--out",
            out.to_str().unwrap(),
            "probe",
            "--model",
            snapshot.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
        ]),
        4,
        "anchor distances all vanish, the invariance ratio is undefined"
    );
}

#[test]
fn eval_aggregate_emits_mean_and_stderr_rows() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        &json!({
            "scm": { "n": 200, "seed": 4 },
            "train": { "epochs": 30 },
            "eval": { "seeds": [0, 1] },
        }),
    );
    let gen = tmp.path().join("gen");
    ok(&["--config", cfg.to_str().unwrap(), "--out", gen.to_str().unwrap(), "generate"]);

    let eval = tmp.path().join("eval");
    ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        eval.to_str().unwrap(),
        "eval",
        "--data",
        gen.join("dataset.json").to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(eval.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "seed,mae,rmse,pehe");
    assert_eq!(rows.len(), 5, "two seed rows plus mean and stderr");
    assert!(rows[3].starts_with("mean,"));
    assert!(rows[4].starts_with("stderr,"));
}

#[test]
fn sweep_covers_the_default_grid_and_draws_one_polyline_per_variant() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        &json!({
            "scm": { "n": 200, "seed": 6 },
            "train": { "epochs": 30 },
            "sweep": { "seeds": [0], "noncausal_noise_grid": [0.0, 1.0] },
        }),
    );
    let c = cfg.to_str().unwrap();

    let out = tmp.path().join("irr");
    ok(&["--config", c, "--out", out.to_str().unwrap(), "sweep", "--svg"]);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut rows = csv.lines();
    assert_eq!(rows.next(), Some("variant,y_noise_std,seed,metric,value"));
    let mut levels: Vec<&str> = rows.map(|r| r.split(',').nth(1).unwrap()).collect();
    levels.sort_unstable();
    levels.dedup();
    assert_eq!(levels.len(), 11, "default outcome-noise grid has 11 points");
    for svg in ["pehe.svg", "mae.svg"] {
        let body = fs::read_to_string(out.join(svg)).unwrap();
        assert_eq!(body.matches("<polyline").count(), 2, "{svg}: plain and contrastive");
    }

    // The other axis dispatches the perturbation protocol.
    let out2 = tmp.path().join("red");
    ok(&["--config", c, "--out", out2.to_str().unwrap(), "sweep", "--axis", "noncausal-noise"]);
    let csv = fs::read_to_string(out2.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("variant,noncausal_noise_scale,seed,metric,value"));

    assert_eq!(exit_code(&["--config", c, "--out", out2.to_str().unwrap(), "sweep", "--axis", "nope"]), 2);
}

#[test]
fn theorem1_reports_the_analytic_gap_and_matching_monte_carlo() {
    let tmp = TempDir::new().unwrap();

    // lambda 0 is the unbiased member: every gap vanishes identically.
    let out0 = tmp.path().join("zero");
    ok(&["--out", out0.to_str().unwrap(), "theorem1", "--lambda", "0", "--draws", "5000"]);
    let r = read_json(&out0.join("theorem1.json"));
    assert_eq!(r["analytic_intervention_gap"].as_f64().unwrap(), 0.0);
    assert_eq!(r["analytic_conditional_mean_gap"].as_f64().unwrap(), 0.0);
    assert_eq!(r["monte_carlo"]["intervention_gap"].as_f64().unwrap(), 0.0);

    // Unit coefficients, shift 2: the gap is the shift itself.
    let out1 = tmp.path().join("unit");
    ok(&[
        "--out",
        out1.to_str().unwrap(),
        "theorem1",
        "--lambda",
        "1",
        "--delta-tnc",
        "2",
    ]);
    let r = read_json(&out1.join("theorem1.json"));
    assert_eq!(r["analytic_intervention_gap"].as_f64().unwrap(), 2.0);
    let mc = &r["monte_carlo"];
    let gap = mc["intervention_gap"].as_f64().unwrap();
    let se = mc["intervention_se"].as_f64().unwrap();
    assert!((gap - 2.0).abs() <= (3.0 * se).max(1e-12), "gap {gap}, se {se}");
}

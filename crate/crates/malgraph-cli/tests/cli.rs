//! End-to-end tests that drive the compiled binary the way a user would,
//! checking artifacts on disk and the documented exit-code mapping.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_malgraph"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Small fast training run shared by several tests.
fn train_tiny(out_dir: &Path, extra: &[&str]) -> Output {
    let out_str = out_dir.to_str().unwrap();
    let mut args = vec![
        "train",
        "--synthetic",
        "10",
        "--arch",
        "gcn",
        "--layers",
        "2",
        "--hidden",
        "8",
        "--epochs",
        "3",
        "--seed",
        "11",
        "--out",
        out_str,
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn train_writes_all_artifacts_and_a_reproducing_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_exit(&train_tiny(&out, &[]), 0);
    for name in ["model.ckpt", "metrics.json", "confusion.csv", "history.csv", "manifest.json"] {
        assert!(out.join(name).exists(), "missing artifact {name}");
    }
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["dataset"]["kind"], "synthetic");
    assert_eq!(manifest["dataset"]["per_class"], 10);
    assert_eq!(manifest["model"]["Gnn"]["arch"], "gcn");
    assert_eq!(manifest["model"]["Gnn"]["num_layers"], 2);
    assert_eq!(manifest["seed"], 11);
    for key in ["split", "init", "dropout", "synth"] {
        assert!(manifest["sub_seeds"][key].is_u64(), "manifest lacks sub-seed {key}");
    }
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,val_accuracy"));
    assert_eq!(history.lines().count(), 1 + 3, "three epochs of history");
}

#[test]
fn train_rejects_negative_learning_rate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let result = train_tiny(&out, &["--lr", "-1"]);
    assert_exit(&result, 1);
    assert!(stderr_of(&result).contains("learning_rate"));
}

#[test]
fn train_with_missing_dataset_directory_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no-such-corpus");
    let out = dir.path().join("run");
    let result = run(&[
        "train",
        "--data",
        missing.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&result, 2);
}

#[test]
fn train_without_any_dataset_source_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let result = run(&["train", "--out", dir.path().to_str().unwrap()]);
    assert_exit(&result, 1);
    assert!(stderr_of(&result).contains("--data DIR or --synthetic N"));
}

#[test]
fn train_with_unknown_architecture_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let result = run(&[
        "train",
        "--synthetic",
        "5",
        "--arch",
        "transformer",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&result, 1);
    assert!(stderr_of(&result).contains("transformer"));
}

#[test]
fn eval_reproduces_the_training_runs_test_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let train_out = dir.path().join("train");
    assert_exit(&train_tiny(&train_out, &[]), 0);
    let eval_out = dir.path().join("eval");
    fs::create_dir(&eval_out).unwrap();
    let result = run(&[
        "eval",
        "--checkpoint",
        train_out.join("model.ckpt").to_str().unwrap(),
        "--synthetic",
        "10",
        "--seed",
        "11",
        "--out",
        eval_out.to_str().unwrap(),
    ]);
    assert_exit(&result, 0);
    let trained = read_json(&train_out.join("metrics.json"));
    let evaled = read_json(&eval_out.join("metrics.json"));
    for key in ["accuracy", "macro_f1", "per_class_accuracy", "confusion"] {
        assert_eq!(trained[key], evaled[key], "metric {key} changed between train and eval");
    }
}

#[test]
fn eval_on_a_corrupt_checkpoint_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let fake = dir.path().join("model.ckpt");
    fs::write(&fake, b"definitely not a checkpoint").unwrap();
    let result = run(&[
        "eval",
        "--checkpoint",
        fake.to_str().unwrap(),
        "--synthetic",
        "10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&result, 1);
}

#[test]
fn eval_with_an_empty_test_split_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let train_out = dir.path().join("train");
    assert_exit(&train_tiny(&train_out, &[]), 0);
    let result = run(&[
        "eval",
        "--checkpoint",
        train_out.join("model.ckpt").to_str().unwrap(),
        "--synthetic",
        "10",
        "--seed",
        "11",
        "--split",
        "0.8,0.2,0.0",
        "--out",
        train_out.to_str().unwrap(),
    ]);
    assert_exit(&result, 2);
}

#[test]
fn embed_exports_one_row_per_graph_with_id_label_and_embedding() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_exit(&train_tiny(&out, &[]), 0);
    let result = run(&[
        "embed",
        "--checkpoint",
        out.join("model.ckpt").to_str().unwrap(),
        "--synthetic",
        "10",
        "--seed",
        "11",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&result, 0);
    let csv = fs::read_to_string(out.join("embeddings.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 50, "header plus one row per graph");
    assert!(lines[0].starts_with("graph_id,label,e0,"));
    for line in &lines {
        assert_eq!(line.split(',').count(), 2 + 8, "2 id columns + hidden width");
    }
    assert!(lines[1].contains("addisplay_like"));
}

#[test]
fn embed_into_a_missing_directory_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_exit(&train_tiny(&out, &[]), 0);
    let result = run(&[
        "embed",
        "--checkpoint",
        out.join("model.ckpt").to_str().unwrap(),
        "--synthetic",
        "10",
        "--out",
        dir.path().join("nowhere").to_str().unwrap(),
    ]);
    assert_exit(&result, 1);
    assert!(stderr_of(&result).contains("does not exist"));
}

#[test]
fn stats_prints_one_row_per_family() {
    let result = run(&["stats", "--synthetic", "6", "--seed", "2"]);
    assert_exit(&result, 0);
    let stdout = String::from_utf8_lossy(&result.stdout).into_owned();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 1 + 5, "header plus five families");
    for family in
        ["addisplay_like", "adware_like", "benign_like", "downloader_like", "trojan_like"]
    {
        assert!(stdout.contains(family), "missing family row {family}");
    }
}

#[test]
fn stats_on_an_empty_directory_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let result = run(&["stats", "--data", dir.path().to_str().unwrap()]);
    assert_exit(&result, 2);
}

#[test]
fn config_file_supplies_values_and_flags_override_them() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        "synthetic = 8\narch = \"gin\"\nlayers = 2\nhidden = 8\nepochs = 2\nseed = 4\n",
    )
    .unwrap();

    let from_file = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
    ]);
    assert_exit(&from_file, 0);
    let manifest = read_json(&out_a.join("manifest.json"));
    assert_eq!(manifest["model"]["Gnn"]["arch"], "gin");
    assert_eq!(manifest["model"]["Gnn"]["num_layers"], 2);
    assert_eq!(manifest["seed"], 4);

    let overridden = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--arch",
        "sgc",
        "--out",
        out_b.to_str().unwrap(),
    ]);
    assert_exit(&overridden, 0);
    let manifest = read_json(&out_b.join("manifest.json"));
    assert_eq!(manifest["model"]["Gnn"]["arch"], "sgc", "the flag overrides the file");
    assert_eq!(manifest["model"]["Gnn"]["num_layers"], 2, "unset flags fall back to the file");
}

#[test]
fn config_file_with_unknown_keys_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, "synthetic = 8\nlayerz = 2\n").unwrap();
    let result = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&result, 1);
    assert!(stderr_of(&result).contains("layerz"));
}

#[test]
fn baseline_archs_train_and_leave_an_empty_history_for_convex_models() {
    let dir = tempfile::tempdir().unwrap();
    for arch in ["mlp", "wl", "feather"] {
        let out = dir.path().join(arch);
        let result = run(&[
            "train",
            "--synthetic",
            "8",
            "--arch",
            arch,
            "--layers",
            "2",
            "--epochs",
            "5",
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_exit(&result, 0);
        let manifest = read_json(&out.join("manifest.json"));
        assert!(manifest["model"]["Baseline"].is_object(), "{arch} records a baseline spec");
        let history = fs::read_to_string(out.join("history.csv")).unwrap();
        if arch == "mlp" {
            assert_eq!(history.lines().count(), 1 + 5, "mlp logs per-epoch history");
        } else {
            assert_eq!(history.lines().count(), 1, "{arch} has no epoch history");
        }
    }
}

#[test]
fn identical_seeds_give_bit_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    assert_exit(&train_tiny(&out_a, &[]), 0);
    assert_exit(&train_tiny(&out_b, &[]), 0);
    assert_eq!(
        fs::read(out_a.join("model.ckpt")).unwrap(),
        fs::read(out_b.join("model.ckpt")).unwrap(),
        "checkpoint bytes differ between identical runs"
    );
    assert_eq!(
        fs::read_to_string(out_a.join("history.csv")).unwrap(),
        fs::read_to_string(out_b.join("history.csv")).unwrap()
    );
}

//! End-to-end checks of the command-line surface: every subcommand runs on
//! a miniature experiment, exit codes follow the validation/numerical
//! split, and run directories refuse to be overwritten.

use std::path::Path;
use std::process::Command;

fn fpinn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fpinn"))
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{
            "system": {"name": "spin-boson", "Gamma": 0.1, "gamma": 0.3, "T": 20.0, "rho0": "ket0"},
            "grid": {"t_f": 21, "T_tot": 6.0},
            "network": {
                "architecture": "forked",
                "shared_layers": [10, 10, 10],
                "branch_layers": [6],
                "out_features": [4, 4],
                "dropout_rate": 0.0,
                "layer_norm": false,
                "seed": 1
            },
            "train": {"t_max": 40, "lambda_er": 0.01, "seed": 1},
            "substeps": 2
        }"#,
    )
    .unwrap();
    path
}

#[test]
fn full_pipeline_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tiny_config(tmp.path());
    let oracle_dir = tmp.path().join("oracle");
    let ops_dir = tmp.path().join("ops");
    let rho_dir = tmp.path().join("rho");

    let status = fpinn()
        .args(["oracle", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&oracle_dir)
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["oracle_O.csv", "oracle_Q.csv", "oracle_rho.csv", "oracle_observables.csv", "metadata.json"] {
        assert!(oracle_dir.join(f).exists(), "missing {f}");
    }

    let status = fpinn()
        .args(["train-operators", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&ops_dir)
        .arg("--oracle-dir")
        .arg(&oracle_dir)
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["operators.ckpt", "loss.csv", "pred_O.csv", "pred_Q.csv", "report.json", "run_record.json"] {
        assert!(ops_dir.join(f).exists(), "missing {f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ops_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["variant"], "with-ER");
    assert!(report["eps_o"].as_f64().unwrap() > 0.0);

    // Phase 2 with the trained checkpoint as the prior source.
    let status = fpinn()
        .args(["train-rho", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&rho_dir)
        .arg("--priors")
        .arg(ops_dir.join("operators.ckpt"))
        .arg("--oracle-dir")
        .arg(&oracle_dir)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(rho_dir.join("rho.ckpt").exists());
    assert!(rho_dir.join("pred_observables.csv").exists());

    // Evaluate the operator checkpoint against the oracle run.
    let out = fpinn()
        .args(["evaluate", "--config"])
        .arg(&config)
        .arg("--checkpoint")
        .arg(ops_dir.join("operators.ckpt"))
        .arg("--oracle-dir")
        .arg(&oracle_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("eps_o"), "evaluate output: {text}");

    // Overlay plot from oracle and prediction files.
    let plot = tmp.path().join("sz.svg");
    let status = fpinn()
        .args(["plot", "--file"])
        .arg(oracle_dir.join("oracle_observables.csv"))
        .arg("--file")
        .arg(rho_dir.join("pred_observables.csv"))
        .args(["--columns", "sigma_z", "--out"])
        .arg(&plot)
        .status()
        .unwrap();
    assert!(status.success());
    let svg = std::fs::read_to_string(&plot).unwrap();
    assert!(svg.contains("<polyline"));
}

#[test]
fn rerunning_into_same_directory_fails_with_validation_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tiny_config(tmp.path());
    let oracle_dir = tmp.path().join("oracle");
    assert!(fpinn()
        .args(["oracle", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&oracle_dir)
        .status()
        .unwrap()
        .success());
    let second = fpinn()
        .args(["oracle", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&oracle_dir)
        .status()
        .unwrap();
    assert_eq!(second.code(), Some(1));
}

#[test]
fn unknown_config_keys_exit_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"system": {"name": "spin-boson", "Gamma": 0.1, "gamma": 0.3, "T": 20.0, "rho0": "ket0", "oops": 1},
            "grid": {"t_f": 5, "T_tot": 1.0},
            "network": {"architecture": "plain", "shared_layers": [4], "out_features": [3],
                        "dropout_rate": 0.0, "layer_norm": false, "seed": 1},
            "train": {"t_max": 1, "seed": 1}}"#,
    )
    .unwrap();
    let status = fpinn()
        .args(["oracle", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(tmp.path().join("x"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn seed_override_changes_run_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tiny_config(tmp.path());
    let dir = tmp.path().join("seeded");
    assert!(fpinn()
        .args(["train-operators", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&dir)
        .args(["--seed", "42", "--override", "train.t_max=5"])
        .status()
        .unwrap()
        .success());
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("run_record.json")).unwrap()).unwrap();
    assert_eq!(record["train"]["seed"], 42);
    assert_eq!(record["network"]["seed"], 42);
    assert_eq!(record["history"].as_array().unwrap().len(), 5);
}

#[test]
fn plot_missing_column_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("data.csv");
    std::fs::write(&csv, "t,a\n0,1\n1,2\n").unwrap();
    let out = fpinn()
        .args(["plot", "--file"])
        .arg(&csv)
        .args(["--columns", "nope", "--out"])
        .arg(tmp.path().join("p.svg"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("available"), "stderr: {err}");
}

#[test]
fn sweep_seeds_fan_out_into_subdirectories() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tiny_config(tmp.path());
    let dir = tmp.path().join("sweep");
    assert!(fpinn()
        .args(["train-operators", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&dir)
        .args(["--override", "train.t_max=5", "--sweep-seeds", "1,2"])
        .status()
        .unwrap()
        .success());
    assert!(dir.join("seed-1").join("operators.ckpt").exists());
    assert!(dir.join("seed-2").join("operators.ckpt").exists());
}

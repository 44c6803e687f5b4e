//! End-to-end exercises of the `gpdistill` binary: train -> distill ->
//! predict on the bundled sample, experiment subcommands, and exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gpdistill"))
}

fn sample_csv() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/sample_synthetic.csv")
}

#[test]
fn train_distill_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let teacher = dir.path().join("teacher.gpx");
    let student = dir.path().join("student.gpx");
    let preds = dir.path().join("preds.csv");
    let log = dir.path().join("trace.json");

    let out = bin()
        .args(["train", "--data"])
        .arg(sample_csv())
        .args(["--target", "target", "--steps", "25", "--kernel", "ard", "--out"])
        .arg(&teacher)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(teacher.exists());

    let out = bin()
        .args(["distill", "--model"])
        .arg(&teacher)
        .args(["--m", "40", "--b", "6", "--iters", "30", "--out"])
        .arg(&student)
        .args(["--log"])
        .arg(&log)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "distill failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let trace: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&log).unwrap()).unwrap();
    assert!(!trace.as_array().unwrap().is_empty());

    let out = bin()
        .args(["predict", "--model"])
        .arg(&student)
        .args(["--data"])
        .arg(sample_csv())
        .args(["--target", "target", "--out"])
        .arg(&preds)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "predict failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&preds).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "mean,variance,clamped");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 120);
    // Predictions land in original target units: compare to the targets.
    let mut errs = Vec::new();
    let data = std::fs::read_to_string(sample_csv()).unwrap();
    for (pred_line, data_line) in rows.iter().zip(data.lines().skip(1)) {
        let mean: f64 = pred_line.split(',').next().unwrap().parse().unwrap();
        let target: f64 = data_line.split(',').nth(4).unwrap().parse().unwrap();
        errs.push((mean - target).abs());
    }
    let mean_abs_err = errs.iter().sum::<f64>() / errs.len() as f64;
    // sd(target) is about 1.3; a fitted student must do far better than that.
    assert!(
        mean_abs_err < 0.6,
        "student predictions off in original units: mean abs err {mean_abs_err}"
    );
}

#[test]
fn predict_works_with_teacher_model_too() {
    let dir = tempfile::tempdir().unwrap();
    let teacher = dir.path().join("teacher.gpx");
    let preds = dir.path().join("preds.csv");
    let out = bin()
        .args(["train", "--data"])
        .arg(sample_csv())
        .args(["--target", "target", "--steps", "5", "--out"])
        .arg(&teacher)
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = bin()
        .args(["predict", "--model"])
        .arg(&teacher)
        .args(["--data"])
        .arg(sample_csv())
        .args(["--target", "target", "--out"])
        .arg(&preds)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(&preds).unwrap();
    assert_eq!(text.lines().count(), 121);
    // Teacher predictions never clamp.
    assert!(text.lines().skip(1).all(|l| l.ends_with("false")));
}

#[test]
fn config_errors_exit_with_2() {
    // Missing data file.
    let out = bin()
        .args(["train", "--data", "/nonexistent/file.csv"])
        .args(["--target", "y", "--out", "/tmp/never.gpx"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Bad target column.
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.gpx");
    let out = bin()
        .args(["train", "--data"])
        .arg(sample_csv())
        .args(["--target", "no_such_column", "--out"])
        .arg(&model)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Config declaring a different experiment than the subcommand.
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"experiment": "toy1d"}"#).unwrap();
    let out = bin()
        .args(["bench", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path().join("r.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Malformed model file.
    let bogus = dir.path().join("bogus.gpx");
    std::fs::write(&bogus, b"not a model").unwrap();
    let out = bin()
        .args(["predict", "--model"])
        .arg(&bogus)
        .args(["--data"])
        .arg(sample_csv())
        .args(["--out"])
        .arg(dir.path().join("p.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reconstruct_reports_are_byte_identical_across_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 5, "reconstruct": {"n": 120, "distill_m": 20, "distill_b": 4,
            "iterations": 10, "sor_m": 30, "grid_size": 40, "b_sweep": [2, 4]}}"#,
    )
    .unwrap();
    let out1 = dir.path().join("r1.json");
    let out2 = dir.path().join("r2.json");
    for out in [&out1, &out2] {
        let st = bin()
            .args(["reconstruct", "--config"])
            .arg(&cfg)
            .args(["--out"])
            .arg(out)
            .output()
            .unwrap();
        assert!(
            st.status.success(),
            "reconstruct failed: {}",
            String::from_utf8_lossy(&st.stderr)
        );
    }
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out2).unwrap();
    assert_eq!(a, b, "reports differ across reruns");
    assert!(dir.path().join("r1.curves.csv").exists());
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 5, "reconstruct": {"n": 100, "distill_m": 15, "distill_b": 3,
            "iterations": 5, "sor_m": 25, "grid_size": 30, "b_sweep": [3]}}"#,
    )
    .unwrap();
    let out1 = dir.path().join("r1.json");
    let out2 = dir.path().join("r2.json");
    bin()
        .args(["reconstruct", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(&out1)
        .status()
        .unwrap();
    bin()
        .args(["reconstruct", "--config"])
        .arg(&cfg)
        .args(["--seed", "6", "--out"])
        .arg(&out2)
        .status()
        .unwrap();
    let a: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out1).unwrap()).unwrap();
    let b: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out2).unwrap()).unwrap();
    assert_eq!(a["seed"], 5);
    assert_eq!(b["seed"], 6);
    assert_ne!(
        a["methods"]["distill"]["fnorm_error"],
        b["methods"]["distill"]["fnorm_error"]
    );
}

use std::path::Path;
use std::process::{Command, Output};

fn gdmopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gdmopt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn data_train_sample_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let ckpt = dir.path().join("model");
    let report = dir.path().join("report.json");

    let out = gdmopt(&["gen-data", "--problem", "msr3", "--n", "64", "--seed", "3", "--out", s(&data)]);
    assert_eq!(stdout_json(&out)["n_samples"], 64);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["args"]["n"], 64);

    let out = gdmopt(&["train", "--data", s(&data), "--epochs", "2", "--T", "10", "--out", s(&ckpt)]);
    stdout_json(&out);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("model.ckpt.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["args"]["T"], 10);

    let sample = |seed: &str| {
        stdout_json(&gdmopt(&[
            "sample", "--ckpt", s(&ckpt), "--input", "[1.0, 0.5, 2.0]", "--omega", "1", "--seed", seed,
        ]))
    };
    let a = sample("7");
    assert_eq!(a, sample("7"));
    let y: Vec<f64> = serde_json::from_value(a["solution"].clone()).unwrap();
    assert_eq!(y.len(), 3);
    assert!(y.iter().all(|&v| v >= 0.0) && y.iter().sum::<f64>() <= 10.0 + 1e-9);

    let out = gdmopt(&[
        "eval", "--ckpt", s(&ckpt), "--data", s(&data), "--method", "gdm", "--limit", "8", "--report", s(&report),
    ]);
    assert_eq!(stdout_json(&out)["n_instances"], 8);
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rep["ratios"].as_array().unwrap().len(), 8);
    assert_eq!(rep["config"]["args"]["method"], "gdm");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"bounds": {"f_star": 2.0, "sigma": 1.5, "p": 0.3, "p_i": 0.9, "trials": 10000}}"#).unwrap();
    let out = stdout_json(&gdmopt(&["--config", s(&cfg), "bounds", "--p-i", "0.2"]));
    assert!((out["closed_form"]["gap_closed_form"].as_f64().unwrap() - 0.06).abs() < 1e-12);
    assert_eq!(out["config"]["args"]["p_i"], 0.2);
    assert_eq!(out["config"]["args"]["trials"], 10000);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");

    let out = gdmopt(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    assert_eq!(gdmopt(&["bounds", "--no-such-flag", "1"]).status.code(), Some(1));
    assert_eq!(gdmopt(&["bounds", "--sigma", "0.5"]).status.code(), Some(1));
    assert_eq!(gdmopt(&["gen-data", "--n", "5", "--out", s(&missing)]).status.code(), Some(1));
    assert_eq!(gdmopt(&["eval", "--data", s(&missing), "--method", "gd"]).status.code(), Some(2));
    assert_eq!(gdmopt(&["--config", s(&missing), "bounds"]).status.code(), Some(2));

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"bounds": {"unknown_key": 1}}"#).unwrap();
    assert_eq!(gdmopt(&["--config", s(&cfg), "bounds"]).status.code(), Some(1));

    assert_eq!(gdmopt(&["--help"]).status.code(), Some(0));
}

#[test]
fn ablation_writes_table_and_echo() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let table = dir.path().join("omega.csv");
    stdout_json(&gdmopt(&["gen-data", "--problem", "msr3", "--n", "40", "--out", s(&data), "--workers", "2"]));
    let out = gdmopt(&[
        "ablate", "--axis", "omega", "--values", "0,2", "--data", s(&data), "--epochs", "1", "--seeds", "0", "--out",
        s(&table),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&table).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("value,mean_ratio"));
    let echo: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("omega.csv.json")).unwrap()).unwrap();
    assert_eq!(echo["config"]["args"]["epochs"], 1);
}

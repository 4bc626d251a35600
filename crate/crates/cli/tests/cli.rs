use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn neutomo(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neutomo"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env_remove("NEUTOMO_OUT_DIR")
        .env_remove("NEUTOMO_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = neutomo(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed:\n{}\n{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn staged_pipeline_chains_through_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let common = ["--seed", "3", "--epochs", "40", "--ratio", "0.4"];
    let with = |cmd: &[&str]| -> Vec<String> { cmd.iter().chain(common.iter()).map(|s| s.to_string()).collect() };
    let run = |cmd: &[&str]| {
        let args = with(cmd);
        ok(d, &args.iter().map(String::as_str).collect::<Vec<_>>())
    };

    assert!(run(&["generate", "--nodes", "15", "--avg-degree", "3"]).contains("15 nodes"));
    assert!(run(&["route"]).contains("105 pairs"));
    run(&["sample"]);
    for f in ["topology.txt", "ground_truth.csv", "measured.csv", "heldout.csv"] {
        assert!(d.join(f).exists(), "missing {f}");
    }
    let measured = fs::read_to_string(d.join("measured.csv")).unwrap().lines().count() - 1;
    assert_eq!(measured, 42);

    run(&["train"]);
    assert_eq!(fs::read_to_string(d.join("losses.csv")).unwrap().lines().count(), 41);
    run(&["predict"]);
    assert!(run(&["evaluate"]).contains("MAPE"));
    let report = json(&d.join("report.json"));
    assert!(report["mape"].as_f64().unwrap().is_finite());
    assert_eq!(report["metadata"]["seed"], 3);
    assert_eq!(report["metadata"]["method"], "model");

    run(&["nmf", "--rank", "4"]);
    assert!(d.join("nmf_objective.csv").exists());
    run(&["evaluate"]);
    assert_eq!(json(&d.join("report.json"))["metadata"]["method"], "nmf");

    run(&["pat"]);
    run(&["evaluate"]);
    assert!(json(&d.join("report.json"))["mape"].as_f64().unwrap().is_finite());
}

#[test]
fn reconstruct_scores_hop_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let flags = ["--regime", "unweighted", "--seed", "1", "--epochs", "30"];
    let run = |cmd: &[&str]| {
        let args: Vec<&str> = cmd.iter().chain(flags.iter()).copied().collect();
        ok(d, &args)
    };
    run(&["generate", "--nodes", "12"]);
    run(&["route"]);
    run(&["sample"]);
    run(&["train"]);
    run(&["predict"]);
    let gt = d.join("ground_truth.csv");
    let text = run(&["reconstruct", "--max-m", "3", "--ground-truth", gt.to_str().unwrap()]);
    assert!(text.contains("A^(1)") && text.contains("A^(3)"));
    for m in 1..=3 {
        assert!(d.join(format!("a{m}.txt")).exists());
    }
    let scores = json(&d.join("reconstruction.json"));
    assert_eq!(scores.as_array().unwrap().len(), 3);
}

#[test]
fn run_uses_config_file_and_env_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("spec.json");
    fs::write(
        &cfg,
        r#"{
            "topology": {"kind": "generate", "nodes": 10, "avg_degree": 3.0},
            "ratio": 0.5,
            "method": "nmf",
            "nmf": {"rank": 3},
            "seeds": [1, 2],
            "out_dir": "ignored"
        }"#,
    )
    .unwrap();
    let out = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_neutomo"))
        .args(["--config", cfg.to_str().unwrap(), "run"])
        .env("NEUTOMO_OUT_DIR", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("seed 1") && text.contains("seed 2"));
    let cells: Vec<_> = fs::read_dir(out.join("cells")).unwrap().collect();
    assert_eq!(cells.len(), 2);

    // second run reuses both cells
    let again = Command::new(env!("CARGO_BIN_EXE_neutomo"))
        .args(["--config", cfg.to_str().unwrap(), "run"])
        .env("NEUTOMO_OUT_DIR", &out)
        .output()
        .unwrap();
    assert_eq!(String::from_utf8_lossy(&again.stdout).matches("(reused)").count(), 2);
}

#[test]
fn grid_writes_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.json");
    fs::write(
        &cfg,
        r#"{
            "topology": {"kind": "generate", "nodes": 10, "avg_degree": 3.0},
            "method": "nmf",
            "nmf": {"rank": 3},
            "seeds": [1, 2, 3],
            "grid": {"ratios": [0.4, 0.6], "samplings": ["random", "monitor"]}
        }"#,
    )
    .unwrap();
    let out = dir.path().join("grid");
    let o = Command::new(env!("CARGO_BIN_EXE_neutomo"))
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
            "grid",
        ])
        .env("NEUTOMO_WORKERS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("12 rows, 0 failed"));
    let rows = fs::read_to_string(out.join("rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 13);
    assert!(out.join("summary.csv").exists() && out.join("summary.txt").exists());
}

#[test]
fn failures_exit_nonzero_with_a_record() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = neutomo(d, &["train"]);
    assert!(!o.status.success());
    let record = json(&d.join("failure.json"));
    assert_eq!(record["command"], "train");
    assert!(record["error"].as_str().unwrap().contains("measured.csv"));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("\"command\":\"train\""));

    let bad = d.join("bad.json");
    fs::write(&bad, r#"{"ratio": 0.3, "no_such_field": 1}"#).unwrap();
    let o = neutomo(d, &["--config", bad.to_str().unwrap(), "generate"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_field"));

    let o = neutomo(d, &["generate", "--ratio", "1.5"]);
    assert!(o.status.success(), "generate ignores the ratio");
    let o = neutomo(d, &["run", "--ratio", "1.5"]);
    assert!(!o.status.success());
}

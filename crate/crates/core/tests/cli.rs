use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_shelfscan");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let o = run(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn error_kind(o: &Output) -> String {
    let line = String::from_utf8_lossy(&o.stderr);
    let v: Value = serde_json::from_str(line.lines().last().unwrap()).unwrap();
    v["error"]["kind"].as_str().unwrap().to_string()
}

/// Small planted dataset written by `synth`.
fn dataset(dir: &Path, seed: &str) -> PathBuf {
    let data = dir.join(format!("data-{seed}"));
    run_ok(&[
        "synth", "--shoppers", "30", "--samples", "400", "--seed", seed, "--plant-labels", "--t-b", "2.0", "--delta-b",
        "1.2", "--v-b", "0.55", "--n-l", "3", "--out", &s(&data),
    ]);
    data
}

const SMALL_GRID: [&str; 6] = ["--t-b-range", "1:3:0.5", "--delta-b-range", "0.6:1.8:0.3", "--v-b-range", "0.25:0.85:0.15"];

#[test]
fn synth_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), "1");
    for f in ["layout.json", "trajectories.jsonl", "ground_truth.jsonl", "labels.jsonl", "manifest.json", "scenario.json"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let manifest: Value = serde_json::from_slice(&std::fs::read(data.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["n_l"], 3);
    let lines = std::fs::read_to_string(data.join("trajectories.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 30);
}

#[test]
fn detect_outputs_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), "2");
    let detect = |out: &Path, jobs: &str| {
        run_ok(&[
            "detect", "--jobs", jobs, "--layout", &s(&data.join("layout.json")), "--trajectories",
            &s(&data.join("trajectories.jsonl")), "--t-b", "2", "--delta-b", "1.2", "--v-b", "0.55", "--out", &s(out),
        ]);
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    detect(&a, "1");
    detect(&b, "3");
    for f in ["stops.jsonl", "stop_matrix.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let report: Value = serde_json::from_slice(&std::fs::read(a.join("detect.json")).unwrap()).unwrap();
    let other: Value = serde_json::from_slice(&std::fs::read(b.join("detect.json")).unwrap()).unwrap();
    assert_eq!(report["result"], other["result"]);
    assert_eq!(report["config"]["t_b"], 2.0);
    assert_eq!(report["result"]["trajectories"], 30);

    // the planted labels are exactly these stops
    let stops = std::fs::read_to_string(a.join("stops.jsonl")).unwrap();
    let labels = std::fs::read_to_string(data.join("labels.jsonl")).unwrap();
    assert_eq!(labels.lines().count(), 3 * stops.lines().count());
    assert!(stops.lines().count() > 0);

    let matrix = std::fs::read_to_string(a.join("stop_matrix.csv")).unwrap();
    assert_eq!(matrix.lines().next().unwrap(), "trajectory_id,shelf_id,k,t,S");
    assert_eq!(matrix.lines().count(), 1 + 30 * 19 * 400);
}

#[test]
fn calibrate_recovers_planted_labels() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), "3");
    let out = dir.path().join("cal");
    let mut args = vec![
        "calibrate".to_string(), "--layout".into(), s(&data.join("layout.json")), "--trajectories".into(),
        s(&data.join("trajectories.jsonl")), "--labels".into(), s(&data.join("labels.jsonl")), "--manifest".into(),
        s(&data.join("manifest.json")), "--dump-grid".into(), "--out".into(), s(&out),
    ];
    args.extend(SMALL_GRID.iter().map(|a| a.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    run_ok(&refs);
    let report: Value = serde_json::from_slice(&std::fs::read(out.join("calibration.json")).unwrap()).unwrap();
    assert_eq!(report["result"]["best_f1"], 1.0);
    assert_eq!(report["result"]["grid_points"], 5 * 5 * 5);
    let table = std::fs::read_to_string(out.join("grid_scores.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 125);
    assert!(table.lines().any(|l| l.starts_with("2,1.2,0.55,") && l.ends_with(",1,1,1")), "{table}");
}

#[test]
fn eval_cross_and_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let a = dataset(dir.path(), "4");
    let b = dataset(dir.path(), "5");
    let out = dir.path().join("cross");
    let mut args: Vec<String> = [
        "eval-cross", "--layout", &s(&a.join("layout.json")), "--trajectories", &s(&a.join("trajectories.jsonl")),
        "--labels", &s(&a.join("labels.jsonl")), "--layout-b", &s(&b.join("layout.json")), "--trajectories-b",
        &s(&b.join("trajectories.jsonl")), "--labels-b", &s(&b.join("labels.jsonl")), "--n-l", "3", "--p", "0.5",
        "--repeats", "3", "--out", &s(&out),
    ]
    .iter()
    .map(|x| x.to_string())
    .collect();
    args.extend(SMALL_GRID.iter().map(|a| a.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    run_ok(&refs);
    let report: Value = serde_json::from_slice(&std::fs::read(out.join("eval.json")).unwrap()).unwrap();
    let r = &report["result"][0];
    assert_eq!(r["protocol"], "cross-store");
    assert_eq!(r["scores"].as_array().unwrap().len(), 3);
    assert_eq!(r["scores"][0]["train_size"], 15);
    assert_eq!(r["scores"][0]["test_size"], 30);

    // zero-visit shelves must come out with an empty rate
    let purchases = dir.path().join("purchases.csv");
    std::fs::write(&purchases, "trajectory_id,shelf_id,quantity\nsynth-00000,1,2\nsynth-00001,2,1\n").unwrap();
    let an = dir.path().join("an");
    run_ok(&[
        "analyze", "--layout", &s(&a.join("layout.json")), "--trajectories", &s(&a.join("trajectories.jsonl")),
        "--t-b", "2", "--delta-b", "1.2", "--v-b", "0.55", "--purchases", &s(&purchases), "--out", &s(&an),
    ]);
    let stats = std::fs::read_to_string(an.join("shelf_stats.csv")).unwrap();
    assert_eq!(stats.lines().count(), 1 + 19);
    let report: Value = serde_json::from_slice(&std::fs::read(an.join("analytics.json")).unwrap()).unwrap();
    let per_shelf: f64 = report["result"]["stats"]["per_shelf"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .sum();
    assert!((report["result"]["stats"]["overall"].as_f64().unwrap() - per_shelf).abs() < 1e-12);
    let conv = std::fs::read_to_string(an.join("conversion.csv")).unwrap();
    for (line, shelf) in conv.lines().skip(1).zip(report["result"]["conversion"]["shelves"].as_array().unwrap()) {
        if shelf["visit_avg"] == 0.0 {
            assert!(shelf["rate"].is_null());
            assert!(line.ends_with(",,"), "{line}");
        }
    }

    // analyze from a stops file gives the same stats
    let det = dir.path().join("det");
    run_ok(&[
        "detect", "--layout", &s(&a.join("layout.json")), "--trajectories", &s(&a.join("trajectories.jsonl")),
        "--t-b", "2", "--delta-b", "1.2", "--v-b", "0.55", "--matrix", "none", "--out", &s(&det),
    ]);
    let an2 = dir.path().join("an2");
    run_ok(&[
        "analyze", "--layout", &s(&a.join("layout.json")), "--trajectories", &s(&a.join("trajectories.jsonl")),
        "--stops", &s(&det.join("stops.jsonl")), "--out", &s(&an2),
    ]);
    assert_eq!(stats, std::fs::read_to_string(an2.join("shelf_stats.csv")).unwrap());
}

#[test]
fn config_file_supplies_keys() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), "6");
    let cfg = dir.path().join("run.json");
    let out = dir.path().join("out");
    let body = serde_json::json!({
        "layout": data.join("layout.json"),
        "trajectories": data.join("trajectories.jsonl"),
        "t_b": 1.0, "delta_b": 1.2, "v_b": 0.55,
        "matrix": "positive",
        "out": out,
    });
    std::fs::write(&cfg, body.to_string()).unwrap();
    run_ok(&["detect", "--config", &s(&cfg), "--t-b", "2.0"]);
    let report: Value = serde_json::from_slice(&std::fs::read(out.join("detect.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["t_b"], 2.0);
    assert_eq!(report["config"]["matrix"], "positive");
    let matrix = std::fs::read_to_string(out.join("stop_matrix.csv")).unwrap();
    assert!(matrix.lines().skip(1).all(|l| l.ends_with(",1")));
}

#[test]
fn oracle_check_command() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_ok(&["oracle-check", "--scenarios", "20", "--seed", "9", "--out", &s(dir.path())]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["scenarios"], 20);
    assert!(dir.path().join("oracle_check.json").exists());
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["detect", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let o = run(&["detect", "--t-b", "2", "--delta-b", "1", "--v-b", "0.5", "--out", "/tmp/x"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "UsageError");
    let o = run(&["detect", "--layout", "/definitely/missing.json", "--trajectories", "/nope.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(run(&["--jobs", "0", "oracle-check", "--scenarios", "1"]).status.code(), Some(2));
}

#[test]
fn data_errors_exit_1_with_record() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), "7");
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{ not json").unwrap();
    let args = |layout: &Path, v_b: &str| {
        let v_b = format!("--v-b={v_b}");
        let (layout, traj, out) = (s(layout), s(&data.join("trajectories.jsonl")), s(&dir.path().join("o")));
        let argv = ["detect", "--layout", &layout, "--trajectories", &traj, "--t-b", "2", "--delta-b", "1", &v_b, "--out", &out];
        run(&argv)
    };

    let o = args(&broken, "0.5");
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_kind(&o), "ParseError");

    let bad_normal = dir.path().join("bad.json");
    std::fs::write(
        &bad_normal,
        r#"{"store_id":"s","shelves":[{"id":1,"face":[[0,0],[1,0]],"normal":[1,0]}]}"#,
    )
    .unwrap();
    let o = args(&bad_normal, "0.5");
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_kind(&o), "ValidationError");

    let o = args(&data.join("layout.json"), "-0.5");
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_kind(&o), "InvalidParams");
}

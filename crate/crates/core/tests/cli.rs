//! End-to-end runs of the `hetsel` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hetsel(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hetsel"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("HETSEL_THREADS", t),
        None => cmd.env_remove("HETSEL_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const INSTANCE: &str = r#"{
  "matrix": [[1, 0.2], [0.9, 0.1], [0, 1], [0.3, 0.8], [0.5, 0.5], [1, -1], [0.2, 0.7], [0.6, 0.1]],
  "sets": [[1, 2, 3, 4], [5, 6, 7, 8]],
  "sigmas": [0.1, 1.0],
  "keep": [2, 2]
}"#;

#[test]
fn bounds_point_prints_csv() {
    let out = hetsel(&["bounds", "--m1", "2", "--m2", "5", "--ms", "4"], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "M1,M2,ms,thm1,thm2,combined");
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&fields[..3], &["2", "5", "4"]);
    let combined: f64 = fields[5].parse().unwrap();
    assert!((0.5..=1.0).contains(&combined));
}

#[test]
fn bounds_sweep_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    let out = hetsel(&["bounds", "--m1", "1", "--m2", "9", "--sweep-ms", "--out", path.to_str().unwrap()], None);
    assert!(out.status.success());
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 10);
    let combined: Vec<f64> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(combined.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn unknown_flag_is_rejected() {
    let out = hetsel(&["bounds", "--m1", "1", "--m2", "9", "--frobnicate"], None);
    assert_eq!(out.status.code(), Some(1));
    let out = hetsel(&["--json-errors", "check", "--bogus"], None);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["exit_code"], 1);
}

#[test]
fn help_documents_flags() {
    let out = hetsel(&["select", "--help"], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for flag in ["--instance", "--method", "--cost", "--weight", "--seed", "--out", "--opt-cap", "--timing", "--json-errors"] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn overlapping_sets_exit_with_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"matrix": [[1, 0], [0, 1], [1, 1]], "sets": [[1, 2], [2, 3]], "sigmas": [1, 2], "keep": [1, 1]}"#,
    );
    let out = hetsel(&["--json-errors", "select", "--instance", &bad], None);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "PartitionNotDisjoint");
    let plain = hetsel(&["select", "--instance", &bad], None);
    assert_eq!(plain.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&plain.stderr).contains("PartitionNotDisjoint"));
}

#[test]
fn opt_over_the_cap_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "i.json", INSTANCE);
    let out = hetsel(&["--json-errors", "select", "--instance", &inst, "--method", "opt", "--opt-cap", "10"], None);
    assert_eq!(out.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "SearchSpaceTooLarge");
}

#[test]
fn zero_row_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(
        dir.path(),
        "zero.json",
        r#"{"matrix": [[1, 0], [0, 0]], "sets": [[1], [2]], "sigmas": [1, 1], "keep": [1, 1]}"#,
    );
    let out = hetsel(&["--json-errors", "select", "--instance", &inst], None);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "ZeroRow");
}

#[test]
fn select_writes_one_based_document() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "i.json", INSTANCE);
    for method in ["jgs", "gs", "igs", "rs", "irs", "opt"] {
        let out_path = dir.path().join(format!("{method}.json"));
        let out = hetsel(
            &["select", "--instance", &inst, "--method", method, "--seed", "9", "--out", out_path.to_str().unwrap()],
            None,
        );
        assert!(out.status.success(), "{method}: {}", String::from_utf8_lossy(&out.stderr));
        let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
        assert_eq!(doc["method"], method);
        assert!(doc.get("wall_time_s").is_none());
        let kept: Vec<Vec<u64>> = serde_json::from_value(doc["kept"].clone()).unwrap();
        assert!(kept.iter().flatten().all(|&i| (1..=8).contains(&i)));
        if method != "gs" {
            assert_eq!(doc["feasible"], true);
            assert!(kept[0].iter().all(|&i| i <= 4) && kept[1].iter().all(|&i| i >= 5));
            assert_eq!(kept.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 2]);
        }
        let combined = doc["bound"]["combined"].as_f64().unwrap();
        assert!((0.5..=1.0).contains(&combined));
    }
}

#[test]
fn timing_flag_adds_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "i.json", INSTANCE);
    let out = hetsel(&["select", "--instance", &inst, "--timing"], None);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(doc["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn proxy_costs_run_from_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "i.json", INSTANCE);
    for cost in ["trace", "logdet", "maxeig", "negmse"] {
        let out = hetsel(&["select", "--instance", &inst, "--cost", cost], None);
        assert!(out.status.success(), "{cost}: {}", String::from_utf8_lossy(&out.stderr));
        let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(doc["cost"], cost);
        assert_eq!(doc["feasible"], true);
    }
}

#[test]
fn check_passes() {
    let out = hetsel(&["check", "--seed", "4", "--cases", "10"], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 7);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn invalid_thread_count_is_rejected() {
    let out = hetsel(&["bounds", "--m1", "1", "--m2", "9", "--ms", "9"], Some("zero"));
    assert_eq!(out.status.code(), Some(1));
}

const SMALL_EXPERIMENT: &str = r#"{
  "model": {"dct": {"k": 3}},
  "set_sizes": [3, 4, 3],
  "keep": [2, 2, 1],
  "noise": {"snr": {"high_db": 40, "position": [0, 1, 0.5]}},
  "sweep": [0, 20],
  "trials": 4,
  "seed": 11,
  "methods": ["jgs", "gs", "igs", "rs", "irs", "opt"]
}"#;

fn run_and_read(args: &[&str], threads: Option<&str>, dir: &Path) -> Vec<(String, Vec<u8>)> {
    let out = hetsel(args, threads);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn experiment_output_is_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "exp.json", SMALL_EXPERIMENT);
    let mut runs = Vec::new();
    for (i, threads) in [None, Some("1"), Some("3"), Some("1")].into_iter().enumerate() {
        let out_dir = dir.path().join(format!("run{i}"));
        let args = ["experiment", "--config", &config, "--out-dir", out_dir.to_str().unwrap(), "--write-trials"];
        runs.push(run_and_read(&args, threads, &out_dir));
    }
    let names: Vec<&str> = runs[0].iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["opt_ratio.csv", "summary.csv", "trials.jsonl"]);
    for run in &runs[1..] {
        assert_eq!(run, &runs[0]);
    }
}

#[test]
fn experiment_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "exp.json", SMALL_EXPERIMENT);
    let out_dir = dir.path().join("o");
    let out = hetsel(
        &["experiment", "--config", &config, "--trials", "2", "--seed", "5", "--out-dir", out_dir.to_str().unwrap(), "--write-trials"],
        None,
    );
    assert!(out.status.success());
    let trials = fs::read_to_string(out_dir.join("trials.jsonl")).unwrap();
    assert_eq!(trials.lines().count(), 4);
    assert!(trials.lines().all(|l| l.contains("\"seed\":5")));
    assert!(!out_dir.join("nothing.csv").exists());
}

#[test]
fn select_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "i.json", INSTANCE);
    let mut outputs = Vec::new();
    for threads in [None, Some("1"), Some("4")] {
        for method in ["opt", "rs"] {
            outputs.push(hetsel(&["select", "--instance", &inst, "--method", method, "--seed", "3"], threads).stdout);
        }
    }
    assert_eq!(outputs[0], outputs[2]);
    assert_eq!(outputs[0], outputs[4]);
    assert_eq!(outputs[1], outputs[3]);
    assert_eq!(outputs[1], outputs[5]);
}

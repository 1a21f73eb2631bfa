use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn fixture(rel: &str) -> String {
    fixtures().join(rel).to_string_lossy().into_owned()
}

fn enerprof(state: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_enerprof"))
        .args(args)
        .env("ENERPROF_STATE_DIR", state)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout_json(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("bad line `{l}`: {e}")))
        .collect()
}

fn table<'a>(rows: &'a [Value], name: &str) -> Vec<&'a Value> {
    rows.iter().filter(|r| r["table"] == name).collect()
}

#[test]
fn usage_errors_exit_two() {
    let state = tempfile::tempdir().unwrap();
    let none = enerprof(state.path(), &[]);
    assert_eq!(code(&none), 2);
    assert!(String::from_utf8_lossy(&none.stderr).contains("Usage"));
    assert_eq!(code(&enerprof(state.path(), &["frobnicate"])), 2);
    assert_eq!(code(&enerprof(state.path(), &["score", "--weight"])), 2);
    assert_eq!(code(&enerprof(state.path(), &["validate"])), 2);
    assert_eq!(code(&enerprof(state.path(), &["--help"])), 0);
}

#[test]
fn replay_fixture_run_matches_exactly() {
    let state = tempfile::tempdir().unwrap();
    let store = fixture("store/results.jsonl");
    let out = enerprof(
        state.path(),
        &["--format", "json-lines", "replay", "--in", &store, "--run", "mid_vit@a100/tensorrt#4"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = stdout_json(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["matches_stored"], true);

    let all = enerprof(state.path(), &["replay", "--in", &store]);
    assert_eq!(code(&all), 0);
}

#[test]
fn replay_detects_tampered_samples() {
    let state = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let copy = |from: &Path, to: &Path| {
        std::fs::create_dir_all(to).unwrap();
        for entry in std::fs::read_dir(from).unwrap() {
            let entry = entry.unwrap();
            if entry.file_type().unwrap().is_dir() {
                continue;
            }
            std::fs::copy(entry.path(), to.join(entry.file_name())).unwrap();
        }
    };
    copy(&fixtures().join("store"), dir.path());
    copy(&fixtures().join("store/results.jsonl.samples"), &dir.path().join("results.jsonl.samples"));
    let log = dir.path().join("results.jsonl.samples/000001.log");
    let text = std::fs::read_to_string(&log).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let mid = lines.len() / 2;
    let tampered: String = lines
        .iter()
        .enumerate()
        .map(|(i, l)| if i == mid { l.replacen(" W,", "1 W,", 1) } else { l.to_string() })
        .map(|l| l + "\n")
        .collect();
    std::fs::write(&log, tampered).unwrap();

    let store = dir.path().join("results.jsonl");
    let out = enerprof(state.path(), &["replay", "--in", store.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("differ"));
}

#[test]
fn weight_zero_ranks_by_accuracy() {
    let state = tempfile::tempdir().unwrap();
    let bundle = fixture("demo_bundle.json");
    let out = enerprof(
        state.path(),
        &[
            "--format",
            "json-lines",
            "score",
            "--bundle",
            &bundle,
            "--setup",
            "a100/pytorch",
            "--metric",
            "manhattan",
            "--weight",
            "0",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = stdout_json(&out);
    let ranking = table(&rows, "ranking");
    assert_eq!(ranking.len(), 3);
    for r in &ranking {
        assert_eq!(r["score"], r["accuracy"]);
    }
    let acc: Vec<f64> = ranking.iter().map(|r| r["accuracy"].as_f64().unwrap()).collect();
    assert!(acc.windows(2).all(|w| w[0] >= w[1]), "{acc:?}");
}

#[test]
fn score_needs_a_setup_when_several_exist() {
    let state = tempfile::tempdir().unwrap();
    let out = enerprof(state.path(), &["score", "--bundle", &fixture("demo_bundle.json")]);
    assert_eq!(code(&out), 2);
    let out = enerprof(state.path(), &["score", "--bundle", &fixture("demo_bundle.json"), "--setup", "h100/onnx"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn score_grid_written_to_file() {
    let state = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.json");
    let out = enerprof(
        state.path(),
        &[
            "score",
            "--bundle",
            &fixture("demo_bundle.json"),
            "--setup",
            "a100/tensorrt",
            "--metric",
            "manhattan",
            "--grid",
            "7",
            "--grid-out",
            grid.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&grid).unwrap()).unwrap();
    assert_eq!(v["values"].as_array().unwrap().len(), 7);
    assert_eq!(v["energies"].as_array().unwrap().len(), 7);
}

#[test]
fn validate_reports_rejected_rows() {
    let state = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let meta = dir.path().join("bad.csv");
    std::fs::write(
        &meta,
        "model_id,family,year,params,flops,activations,input_size,imagenet\n\
         good,CNN,2020,1e6,1e9,,224,75.0\n\
         bad,CNN,2020,1e6,1e9,,224,250\n",
    )
    .unwrap();
    let out = enerprof(state.path(), &["--format", "csv", "validate", "--metadata", meta.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("bad"), "{text}");

    let ok = enerprof(
        state.path(),
        &[
            "validate",
            "--in",
            &fixture("store/results.jsonl"),
            "--metadata",
            &fixture("metadata.csv"),
            "--bundle",
            &fixture("demo_bundle.json"),
        ],
    );
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
}

#[test]
fn analyze_writes_report_directory() {
    let state = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report");
    let out = enerprof(
        state.path(),
        &[
            "analyze",
            "--in",
            &fixture("store/results.jsonl"),
            "--metadata",
            &fixture("metadata.csv"),
            "--report",
            report.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["pareto.csv", "pareto.json", "yearly_hulls.csv", "naive_vs_measured.csv", "setup_correlation.csv"] {
        assert!(report.join(name).is_file(), "missing {name}");
    }
    // an explicit fit with three models per setup has nothing to fit
    let fit = enerprof(
        state.path(),
        &["analyze", "--in", &fixture("store/results.jsonl"), "--metadata", &fixture("metadata.csv"), "--fit"],
    );
    assert_eq!(code(&fit), 1);
}

#[test]
fn export_with_setup_filter() {
    let state = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("b.json");
    let out = enerprof(
        state.path(),
        &[
            "export",
            "--in",
            &fixture("store/results.jsonl"),
            "--metadata",
            &fixture("metadata.csv"),
            "--out",
            out_path.to_str().unwrap(),
            "--setup",
            "a100/tensorrt",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let b: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(b["setups"].as_array().unwrap().len(), 1);
    assert!(b["metrics"].as_array().unwrap().iter().all(|m| m["setup_id"] == "a100/tensorrt"));

    let unknown = enerprof(
        state.path(),
        &[
            "export",
            "--in",
            &fixture("store/results.jsonl"),
            "--metadata",
            &fixture("metadata.csv"),
            "--out",
            out_path.to_str().unwrap(),
            "--setup",
            "v100/tf",
        ],
    );
    assert_eq!(code(&unknown), 1);
}

fn measure_args<'a>(workload: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "--format",
        "json-lines",
        "measure",
        "--workload",
        workload,
        "--model",
        "toy",
        "--gpu-label",
        "gpu0",
        "--runtime-label",
        "rt",
        "--tdp",
        "300",
        "--max-batch",
        "1",
        "--min-reps",
        "3",
        "--min-runtime-s",
        "0.3",
        "--out",
        out,
    ]
}

#[test]
fn measure_drives_a_child_process() {
    let state = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("r.jsonl");
    let workload = format!("{} sim-workload --params base_ms=20", env!("CARGO_BIN_EXE_enerprof"));
    let mut args = measure_args(&workload, store.to_str().unwrap());
    args.extend(["--sampler", "synthetic", "--sampler-source", "30:180"]);
    let out = enerprof(state.path(), &args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = stdout_json(&out);
    let runs = table(&rows, "runs");
    assert_eq!(runs.len(), 1);
    let p = runs[0]["avg_power_w"].as_f64().unwrap();
    assert!((p - 180.0).abs() < 1e-9, "{p}");
    assert!(runs[0]["batches"].as_u64().unwrap() >= 4);
    assert!(!state.path().join("gpu0.lock").exists(), "lock released");
}

#[test]
fn measure_with_live_sampler_command() {
    let state = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("fake-smi.sh");
    std::fs::write(
        &script,
        "#!/bin/sh\nwhile true; do\n  printf '%s, 150.00 W, 90 %%, 1000 MiB, 50\\n' \"$(date -u '+%Y/%m/%d %H:%M:%S.%3N')\"\n  sleep 0.005\ndone\n",
    )
    .unwrap();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
    }
    let store = dir.path().join("r.jsonl");
    let workload = format!("{} sim-workload --params base_ms=20", env!("CARGO_BIN_EXE_enerprof"));
    let source = format!("{} {{period_ms}}", script.display());
    let mut args = measure_args(&workload, store.to_str().unwrap());
    args.extend(["--sampler", "live", "--sampler-source", &source]);
    let out = enerprof(state.path(), &args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = stdout_json(&out);
    let p = table(&rows, "runs")[0]["avg_power_w"].as_f64().unwrap();
    assert!((p - 150.0).abs() < 1e-9, "{p}");

    let replay = enerprof(state.path(), &["replay", "--in", store.to_str().unwrap()]);
    assert_eq!(code(&replay), 0);
}

#[test]
fn measure_refuses_a_locked_gpu() {
    let state = tempfile::tempdir().unwrap();
    std::fs::write(state.path().join("gpu0.lock"), "12345\n").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("r.jsonl");
    let mut args = measure_args("sim:base_ms=20", store.to_str().unwrap());
    args.extend(["--sampler", "synthetic", "--sampler-source", "30:180"]);
    let out = enerprof(state.path(), &args);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("locked"));
    assert!(!store.exists());
}

#[test]
fn measure_rejects_bad_flags() {
    let state = tempfile::tempdir().unwrap();
    let mut args = measure_args("sim:base_ms=20", "/nonexistent/r.jsonl");
    args.extend(["--sampler", "synthetic"]);
    assert_eq!(code(&enerprof(state.path(), &args)), 2);
    let mut args = measure_args("sim:base_ms=20", "/nonexistent/r.jsonl");
    args.extend(["--sampler", "synthetic", "--sampler-source", "30:180", "--sampler-rate", "5000"]);
    assert_eq!(code(&enerprof(state.path(), &args)), 2);
}

//! End-to-end tests of the gpushare binary: exit codes, output files,
//! determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gpushare"))
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gpushare-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// A small deterministic trace shared by the tests.
fn small_trace(dir: &Path) -> PathBuf {
    run_ok(bin().args([
        "gen-trace",
        "--preset",
        "physical",
        "--load-scale",
        "0.4",
        "--seed",
        "5",
        "--out",
        dir.to_str().unwrap(),
    ]));
    dir.join("trace.jsonl")
}

#[test]
fn gen_trace_then_run_produces_reports() {
    let dir = tmp_dir("run");
    let trace = small_trace(&dir);
    let out = run_ok(bin().args([
        "run",
        "--trace",
        trace.to_str().unwrap(),
        "--cluster",
        "4x4x11",
        "--policy",
        "sjf-bsbf",
        "--seed",
        "7",
        "--out",
        dir.join("results").to_str().unwrap(),
    ]));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("average JCT"), "{stdout}");

    let summary = fs::read_to_string(dir.join("results/summary.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&summary).unwrap();
    let metrics = &doc["results"][0]["metrics"];
    assert!(metrics["average_jct"].as_f64().unwrap() > 0.0);
    assert!(metrics["makespan"].as_f64().unwrap() > 0.0);
    assert!(metrics["average_queuing"].as_f64().unwrap() >= 0.0);

    let per_job = fs::read_to_string(dir.join("results/per_job.csv")).unwrap();
    assert!(per_job.starts_with("job_id,task_name,"));
    // 12 jobs at load 0.4 of the 30-job preset, plus the header
    assert_eq!(per_job.lines().count(), 13);
}

#[test]
fn same_seed_gives_identical_outputs() {
    let dir = tmp_dir("determinism");
    let trace = small_trace(&dir);
    for sub in ["a", "b"] {
        run_ok(bin().args([
            "run",
            "--trace",
            trace.to_str().unwrap(),
            "--cluster",
            "4x4x11",
            "--seed",
            "11",
            "--out",
            dir.join(sub).to_str().unwrap(),
        ]));
    }
    let a = fs::read(dir.join("a/per_job.csv")).unwrap();
    let b = fs::read(dir.join("b/per_job.csv")).unwrap();
    assert_eq!(a, b);
    let a = fs::read(dir.join("a/summary.json")).unwrap();
    let b = fs::read(dir.join("b/summary.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn missing_profile_task_names_the_task_and_exits_2() {
    let dir = tmp_dir("missing-profile");
    let trace = dir.join("trace.jsonl");
    fs::write(
        &trace,
        r#"{"job_id":"a","task_name":"mystery-model","arrival":0.0,"gpus":1,"batch_per_gpu":8,"iterations":10}"#,
    )
    .unwrap();
    let out = bin()
        .args([
            "run",
            "--trace",
            trace.to_str().unwrap(),
            "--cluster",
            "1x2",
            "--out",
            dir.join("results").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("mystery-model"), "{stderr}");
}

#[test]
fn compare_emits_one_row_per_policy() {
    let dir = tmp_dir("compare");
    let trace = small_trace(&dir);
    let out = run_ok(bin().args([
        "compare",
        "--trace",
        trace.to_str().unwrap(),
        "--cluster",
        "4x4x11",
        "--policy",
        "fifo,sjf,sjf-bsbf",
        "--out",
        dir.join("results").to_str().unwrap(),
    ]));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("sjf-bsbf"), "{stdout}");
    let csv = fs::read_to_string(dir.join("results/compare.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4, "{csv}");
    assert!(csv.lines().next().unwrap().contains("large_average_jct"));
}

#[test]
fn sweep_interference_grid_rows() {
    let dir = tmp_dir("sweep");
    let trace = small_trace(&dir);
    run_ok(bin().args([
        "sweep",
        "--dimension",
        "interference",
        "--grid",
        "1.0,2.0",
        "--trace",
        trace.to_str().unwrap(),
        "--cluster",
        "4x4x11",
        "--policy",
        "sjf-ffs,sjf-bsbf",
        "--out",
        dir.join("results").to_str().unwrap(),
    ]));
    let csv = fs::read_to_string(dir.join("results/sweep.csv")).unwrap();
    // header + 2 grid values x 2 policies
    assert_eq!(csv.lines().count(), 5, "{csv}");
    assert!(csv.contains("interference,1,"));
    assert!(csv.contains("interference,2,"));
}

#[test]
fn sweep_rejects_empty_grid() {
    let dir = tmp_dir("sweep-empty");
    let out = bin()
        .args([
            "sweep",
            "--dimension",
            "interference",
            "--grid",
            "",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_theorem_reports_and_passes() {
    let dir = tmp_dir("verify");
    let out = run_ok(bin().args([
        "verify-theorem",
        "--samples",
        "200",
        "--grid-points",
        "101",
        "--seed",
        "3",
        "--out",
        dir.to_str().unwrap(),
    ]));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("max violation"), "{stdout}");
    assert!(stdout.contains("worst pair"), "{stdout}");
    let csv = fs::read_to_string(dir.join("theorem.csv")).unwrap();
    assert_eq!(csv.lines().count(), 201);
    assert!(csv.starts_with("t_running,"));
}

#[test]
fn gen_trace_emit_defaults_writes_documents() {
    let dir = tmp_dir("defaults");
    run_ok(bin().args([
        "gen-trace",
        "--preset",
        "physical",
        "--seed",
        "1",
        "--out",
        dir.to_str().unwrap(),
        "--emit-defaults",
    ]));
    let profiles = fs::read_to_string(dir.join("profiles.json")).unwrap();
    assert!(profiles.contains("\"bert\""));
    let interference = fs::read_to_string(dir.join("interference.json")).unwrap();
    assert!(interference.contains("default_xi"));

    // the emitted documents round-trip through the loaders
    let trace = dir.join("trace.jsonl");
    run_ok(bin().args([
        "run",
        "--trace",
        trace.to_str().unwrap(),
        "--cluster",
        "4x4x11",
        "--profiles",
        dir.join("profiles.json").to_str().unwrap(),
        "--interference",
        dir.join("interference.json").to_str().unwrap(),
        "--out",
        dir.join("results").to_str().unwrap(),
    ]));
}

#[test]
fn constant_interference_flag_parses() {
    let dir = tmp_dir("constant-xi");
    let trace = small_trace(&dir);
    run_ok(bin().args([
        "run",
        "--trace",
        trace.to_str().unwrap(),
        "--cluster",
        "4x4x11",
        "--interference",
        "1.4",
        "--out",
        dir.join("results").to_str().unwrap(),
    ]));
    let summary = fs::read_to_string(dir.join("results/summary.json")).unwrap();
    assert!(summary.contains("constant:1.4"), "{summary}");
}

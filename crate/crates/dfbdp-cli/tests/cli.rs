//! End-to-end checks of the `dfbdp` binary: exit codes, emitted files, and
//! reproducibility of the summary artifact.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dfbdp"))
}

/// A configuration small enough to solve in well under a second.
fn tiny_config(dir: &Path, out: &str, emit: &str) -> std::path::PathBuf {
    let text = format!(
        "[benchmark]\nname = ex1_uniform\n\n\
         [grid]\nn = 4\nt = 1.0\n\n\
         [train]\nm = 32\nfirst_iters = 20\nwarm_iters = 8\nquad_nodes = 4\nhidden = 6\nseed = 7\n\n\
         [output]\nruns = 2\neval_m = 64\ndir = {}\nemit = {}\n",
        dir.join(out).display(),
        emit
    );
    let path = dir.join("exp.ini");
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary should launch")
}

#[test]
fn solve_writes_summary_and_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), "out", "summary");
    let out = run(&["solve", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let summary = fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next().unwrap(), "benchmark,d,n,m,runs,mean,stddev,rel_l1");
    let row = lines.next().unwrap();
    assert!(row.starts_with("ex1_uniform,1,4,32,2,"), "row: {row}");
    assert_eq!(lines.next(), None);

    let per_run = fs::read_to_string(dir.path().join("out/per_run.csv")).unwrap();
    assert_eq!(per_run.lines().count(), 3); // header + 2 runs

    // stdout carries the human-readable table
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("ex1_uniform"), "stdout: {stdout}");
}

#[test]
fn full_emit_writes_every_artifact_family() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), "all", "summary,loss_traces,curves,paths,checkpoints");
    let out = run(&["solve", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let base = dir.path().join("all");
    for name in [
        "summary.csv",
        "per_run.csv",
        "loss_trace_run0.csv",
        "checkpoint_run0.json",
        "forward_paths.csv",
        "y_path.csv",
    ] {
        let path = base.join(name);
        assert!(path.exists(), "missing {name}");
        assert!(fs::metadata(&path).unwrap().len() > 0, "{name} empty");
    }
    // one curve file per requested nominal time
    let curves: Vec<_> = fs::read_dir(&base)
        .unwrap()
        .filter_map(|e| {
            let n = e.unwrap().file_name().into_string().unwrap();
            n.starts_with("u_curve_t").then_some(n)
        })
        .collect();
    assert_eq!(curves.len(), 4, "curve files: {curves:?}");

    let head = fs::read_to_string(base.join("forward_paths.csv")).unwrap();
    assert!(head.starts_with("sample,i,t,x_1,jump_count"), "{head}");
}

#[test]
fn identical_invocations_reproduce_summary_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), "a", "summary");
    assert!(run(&["solve", "--config", config.to_str().unwrap(), "--workers", "1"])
        .status
        .success());
    let out_b = dir.path().join("b");
    assert!(run(&[
        "solve",
        "--config",
        config.to_str().unwrap(),
        "--workers",
        "1",
        "--out",
        out_b.to_str().unwrap(),
    ])
    .status
    .success());
    let a = fs::read(dir.path().join("a/summary.csv")).unwrap();
    let b = fs::read(out_b.join("summary.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn seed_override_changes_the_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), "s7", "summary");
    assert!(run(&["solve", "--config", config.to_str().unwrap()]).status.success());
    let out2 = dir.path().join("s8");
    assert!(run(&[
        "solve",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "8",
        "--out",
        out2.to_str().unwrap(),
    ])
    .status
    .success());
    let a = fs::read(dir.path().join("s7/summary.csv")).unwrap();
    let b = fs::read(out2.join("summary.csv")).unwrap();
    assert_ne!(a, b, "different master seeds should move the estimate");
}

#[test]
fn validate_accepts_good_and_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let good = tiny_config(dir.path(), "unused", "summary");
    let out = run(&["validate", "--config", good.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok:"));

    let bad = dir.path().join("bad.ini");
    fs::write(&bad, "[benchmark]\nname = ex1_uniform\nturbo = yes\n").unwrap();
    let out = run(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("turbo"), "stderr: {err}");
}

#[test]
fn missing_config_file_is_a_usage_error() {
    let out = run(&["solve", "--config", "/nonexistent/exp.ini"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn zero_workers_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), "w0", "summary");
    let out = run(&["solve", "--config", config.to_str().unwrap(), "--workers", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

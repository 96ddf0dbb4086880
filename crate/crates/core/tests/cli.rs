//! End-to-end checks of the command-line surface: subcommands, output
//! files, and the exit-code taxonomy (1 = configuration, 2 = numerics,
//! 3 = hypotheses).

use std::path::Path;
use std::process::Command;

fn backpar() -> Command {
    Command::new(env!("CARGO_BIN_EXE_backpar"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

const DEGENERATE: &str = r#"{
  "problem": {
    "x_lo": 0.0, "x_hi": 1.0, "n_cells": 100, "T": 1.0,
    "bc": "dirichlet", "a": "x*(1-x)", "sigma": "x*(1-x)",
    "u0": "sin(3.14159265358979*x)"
  },
  "discretization": { "dt": 0.004 },
  "carleman": { "lambda": 1.0, "s_grid": [1, 2, 3, 4, 5] },
  "reconstruction": { "t0": 0.5 },
  "experiment": { "deltas": [1e-4, 3e-4, 1e-3, 3e-3, 1e-2], "seeds": [42] }
}"#;

#[test]
fn check_reports_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), DEGENERATE);
    let out = backpar()
        .args(["--config"])
        .arg(&config)
        .args(["--output-dir"])
        .arg(dir.path().join("out"))
        .args(["--quiet", "check"])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["ellipticity_ok"], true);
    assert_eq!(report["lambda1"], 1e-9);
}

#[test]
fn check_exits_three_on_hypothesis_failure() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
          "problem": {
            "x_lo": 0.0, "x_hi": 1.0, "n_cells": 64, "T": 1.0,
            "bc": "dirichlet", "a": "x", "b": "1", "sigma": "x"
          },
          "discretization": { "dt": 0.01 }
        }"#,
    );
    let out = backpar()
        .args(["--config"])
        .arg(&config)
        .args(["--output-dir"])
        .arg(dir.path().join("out"))
        .args(["--quiet", "check"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    // the report is still printed before the failure is signalled
    assert!(serde_json::from_slice::<serde_json::Value>(&out.stdout).is_ok());
}

#[test]
fn invalid_config_exits_one_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
          "problem": {
            "x_lo": 0.0, "x_hi": 1.0, "n_cells": 16, "T": 1.0,
            "bc": "robin", "a": "1"
          },
          "discretization": { "dt": 0.01 }
        }"#,
    );
    let out = backpar()
        .args(["--config"])
        .arg(&config)
        .args(["--quiet", "check"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("problem.r"), "{stderr}");
}

#[test]
fn unknown_subcommand_exits_one_with_usage() {
    let out = backpar()
        .args(["--config", "/nonexistent.json", "frobnicate"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "{stderr}");
}

#[test]
fn solve_writes_the_series() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), DEGENERATE);
    let out_dir = dir.path().join("out");
    let status = backpar()
        .args(["--config"])
        .arg(&config)
        .args(["--output-dir"])
        .arg(&out_dir)
        .args(["--quiet", "solve"])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(out_dir.join("solution.csv")).unwrap();
    assert!(text.starts_with("t,x,value\n"));
    // 251 frames x 101 nodes + header
    assert_eq!(text.lines().count(), 251 * 101 + 1);
}

#[test]
fn carleman_emits_the_contract_columns() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), DEGENERATE);
    let out_dir = dir.path().join("out");
    let status = backpar()
        .args(["--config"])
        .arg(&config)
        .args(["--output-dir"])
        .arg(&out_dir)
        .args(["--quiet", "carleman"])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(out_dir.join("carleman.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "s,lhs_time,lhs_zero,rhs_source,rhs_terminal,rhs_initial,ratio"
    );
    assert_eq!(lines.count(), 5);
}

#[test]
fn rate_thm1_writes_report_with_five_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), DEGENERATE);
    let out_dir = dir.path().join("out");
    let out = backpar()
        .args(["--config"])
        .arg(&config)
        .args(["--output-dir"])
        .arg(&out_dir)
        .args(["--quiet", "rate-thm1"])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "delta,D,error,s_star,theta_theory");
    assert_eq!(lines.count(), 5);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["points"].as_array().unwrap().len(), 5);
}

#[test]
fn reconstruct_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), DEGENERATE);
    let out_dir = dir.path().join("out");
    // generate terminal data by solving forward, then extract the last frame
    let status = backpar()
        .args(["--config"])
        .arg(&config)
        .args(["--output-dir"])
        .arg(&out_dir)
        .args(["--quiet", "solve"])
        .status()
        .unwrap();
    assert!(status.success());
    let solution = std::fs::read_to_string(out_dir.join("solution.csv")).unwrap();
    let mut data = String::from("x,value\n");
    for line in solution.lines().skip(1) {
        let mut cols = line.split(',');
        let t = cols.next().unwrap();
        if t.starts_with("1.0000000000000000e0") {
            let x = cols.next().unwrap();
            let v = cols.next().unwrap();
            data.push_str(&format!("{x},{v}\n"));
        }
    }
    let data_path = dir.path().join("terminal.csv");
    std::fs::write(&data_path, data).unwrap();

    let out = backpar()
        .args(["--config"])
        .arg(&config)
        .args(["--output-dir"])
        .arg(&out_dir)
        .args(["--quiet", "reconstruct", "--data"])
        .arg(&data_path)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stats: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("reconstruction.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(stats["converged"], true);
    let estimate = std::fs::read_to_string(out_dir.join("estimate.csv")).unwrap();
    assert!(estimate.starts_with("x,value\n"));
    assert_eq!(estimate.lines().count(), 102);
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), DEGENERATE);
    let run = |threads: &str, out: &Path| {
        let status = backpar()
            .env("RAYON_NUM_THREADS", threads)
            .args(["--config"])
            .arg(&config)
            .args(["--output-dir"])
            .arg(out)
            .args(["--quiet", "rate-thm1"])
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out.join("report.csv")).unwrap()
    };
    let serial = run("1", &dir.path().join("serial"));
    let parallel = run("4", &dir.path().join("parallel"));
    assert_eq!(serial, parallel, "report.csv depends on the thread count");
}

#[test]
fn numerical_failure_exits_two() {
    // 1 - dt c = 0 exactly: the implicit system is singular and the
    // elimination reports a vanishing pivot
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
          "problem": {
            "x_lo": 0.0, "x_hi": 1.0, "n_cells": 16, "T": 1.0,
            "bc": "dirichlet", "a": "0", "c": "100", "u0": "x*(1-x)"
          },
          "discretization": { "dt": 0.01 }
        }"#,
    );
    let out = backpar()
        .args(["--config"])
        .arg(&config)
        .args(["--output-dir"])
        .arg(dir.path().join("out"))
        .args(["--quiet", "solve"])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

//! End-to-end runs of the `lieadj` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lieadj"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("LIEADJ_THREADS", "2")
        .output()
        .unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

fn headers(path: &Path) -> Vec<String> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    reader
        .headers()
        .unwrap()
        .iter()
        .map(str::to_string)
        .collect()
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let idx = headers(path).iter().position(|h| h == name).unwrap();
    rows(path).iter().map(|r| r[idx].parse().unwrap()).collect()
}

fn summary(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

const GRADIENT_LIKE: &str = r#"{
    "group": "SO3", "problem": "so3_gradient_like", "retraction": "cayley", "T": 1.0, "N": 10,
    "cost": {"name": "trace_linear", "A": [1, 2, 0, 0, 1, 3, 1, 0, 1]},
    "g0": "random", "seed": 7
}"#;

#[test]
fn integrate_writes_one_row_per_step() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"group": "SO3", "problem": "so3_constant", "T": 1.0, "N": 10}"#,
    );
    let out = run(&["integrate"], &cfg, &dir.path().join("out"));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let traj = dir.path().join("out/trajectory.csv");
    assert_eq!(rows(&traj).len(), 11);
    assert_eq!(headers(&traj).len(), 2 + 9 + 3 + 1);
    assert!(column(&traj, "membership_residual")
        .iter()
        .all(|r| *r <= 1e-12));
    assert_eq!(summary(&dir.path().join("out"))["N"], 10);
}

#[test]
fn zero_field_single_step_keeps_g0() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"group": "SE3", "problem": "zero", "T": 0.5, "N": 1, "g0_algebra": [0.1, -0.2, 0.3, 1.0, 2.0, -1.0]}"#,
    );
    let out = run(&["integrate"], &cfg, &dir.path().join("out"));
    assert!(out.status.success());
    let r = rows(&dir.path().join("out/trajectory.csv"));
    assert_eq!(r.len(), 2);
    assert_eq!(r[0][2..18], r[1][2..18]);
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    for bad in [
        r#"{"group": "SO4", "problem": "zero", "T": 1.0, "N": 4}"#,
        r#"{"group": "SO3", "problem": "no_such_problem", "T": 1.0, "N": 4}"#,
        r#"{"group": "SO3", "problem": "zero", "T": 1.0, "N": 0}"#,
        r#"{"group": "SO3", "problem": "zero", "T": -1.0, "N": 4}"#,
        r#"{"group": "SO3", "problem": "zero", "T": 1.0}"#,
        "not json",
    ] {
        let cfg = write_config(dir.path(), bad);
        let out = run(&["integrate"], &cfg, &dir.path().join("out"));
        assert_eq!(out.status.code(), Some(2), "{bad}");
        assert!(!out.stderr.is_empty());
    }
    let out = run(
        &["integrate"],
        &dir.path().join("missing.json"),
        &dir.path().join("out"),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sensitivity_requires_a_cost() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"group": "SO3", "problem": "so3_constant", "T": 1.0, "N": 4}"#,
    );
    assert_eq!(
        run(&["sensitivity"], &cfg, &dir.path().join("out"))
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn solver_failure_exits_3_and_names_the_step() {
    let dir = TempDir::new().unwrap();
    // ‖Δt ξ‖ = 4 leaves the exponential chart's domain on the first step.
    let cfg = write_config(
        dir.path(),
        r#"{"group": "SO3", "problem": {"name": "so3_constant", "xi0": [4.0, 0.0, 0.0]}, "T": 1.0, "N": 1}"#,
    );
    let out = run(&["integrate"], &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step 0"));
}

#[test]
fn sensitivity_matches_oracle() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), GRADIENT_LIKE);
    let out_dir = dir.path().join("out");
    let out = run(&["sensitivity", "--mode", "initial"], &cfg, &out_dir);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let grad = out_dir.join("gradient.csv");
    assert_eq!(
        headers(&grad),
        ["component", "algorithm", "oracle", "relative_error"]
    );
    assert_eq!(rows(&grad).len(), 3);
    assert!(column(&grad, "relative_error").iter().all(|e| *e <= 1e-6));
    let inv = out_dir.join("invariant.csv");
    assert_eq!(rows(&inv).len(), 11);
    assert!(column(&inv, "drift").iter().all(|d| *d <= 1e-12));
    assert!(summary(&out_dir)["conservation_drift"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn parameter_mode_with_vanishing_field_gives_zero_gradient() {
    let dir = TempDir::new().unwrap();
    // skew(A g) vanishes at g = I for symmetric A, so the trajectory and its
    // parameter derivative stay trivial.
    let cfg = write_config(
        dir.path(),
        r#"{"group": "SO3", "problem": {"name": "so3_scalar_gain", "A": [2, 1, 0, 1, 3, 0, 0, 0, 1]},
            "T": 1.0, "N": 10, "cost": {"name": "trace_linear", "A": [1, 2, 0, 0, 1, 3, 1, 0, 1]}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = run(&["sensitivity", "--mode", "parameter"], &cfg, &out_dir);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let grad = out_dir.join("gradient.csv");
    assert_eq!(rows(&grad).len(), 1);
    assert_eq!(column(&grad, "algorithm"), [0.0]);
}

#[test]
fn parameter_mode_without_parameters_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), GRADIENT_LIKE);
    let out = run(
        &["sensitivity", "--mode", "parameter"],
        &cfg,
        &dir.path().join("out"),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), GRADIENT_LIKE);
    for cmd in ["integrate", "sensitivity", "audit"] {
        let a = dir.path().join(format!("{cmd}_a"));
        let b = dir.path().join(format!("{cmd}_b"));
        assert!(run(&[cmd], &cfg, &a).status.success());
        assert!(run(&[cmd], &cfg, &b).status.success());
        for entry in fs::read_dir(&a).unwrap() {
            let name = entry.unwrap().file_name();
            assert_eq!(
                fs::read(a.join(&name)).unwrap(),
                fs::read(b.join(&name)).unwrap(),
                "{cmd}: {name:?}"
            );
        }
    }
}

#[test]
fn csv_floats_carry_seventeen_digits() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), GRADIENT_LIKE);
    assert!(run(&["integrate"], &cfg, &dir.path().join("out"))
        .status
        .success());
    let r = rows(&dir.path().join("out/trajectory.csv"));
    let mantissa = r[3][2]
        .trim_start_matches('-')
        .split('e')
        .next()
        .unwrap()
        .replace('.', "");
    assert_eq!(mantissa.len(), 17);
}

#[test]
fn optimize_reaches_reachable_attitude_target() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"group": "SO3", "problem": "so3_constant", "T": 1.0, "N": 20,
            "cost": {"name": "frobenius_target", "reachable_from": [0.3, -0.2, 0.4]},
            "linesearch": {"gamma0": 0.5, "max_outer_iters": 200}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = run(&["optimize"], &cfg, &out_dir);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let costs = column(&out_dir.join("trace.csv"), "cost");
    assert!(costs.windows(2).all(|w| w[1] < w[0]));
    assert!(*costs.last().unwrap() <= 1e-8);
    assert_eq!(rows(&out_dir.join("final_point.csv")).len(), 3);
    assert_eq!(summary(&out_dir)["converged"], true);
}

#[test]
fn optimize_zero_gradient_start_has_one_row() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"group": "SO3", "problem": "zero", "T": 1.0, "N": 3,
            "cost": {"name": "trace_linear", "A": [1, 0, 0, 0, 1, 0, 0, 0, 1]}}"#,
    );
    let out_dir = dir.path().join("out");
    assert!(run(&["optimize"], &cfg, &out_dir).status.success());
    assert_eq!(rows(&out_dir.join("trace.csv")).len(), 1);
}

#[test]
fn optimize_iteration_cap_exits_0_unconverged() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"group": "SO3", "problem": "so3_controlled", "T": 1.0, "N": 5,
            "cost": {"name": "trace_linear", "A": [1, 2, 0, 0, 1, 3, 1, 0, 1]},
            "linesearch": {"max_outer_iters": 2}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = run(&["optimize", "--mode", "parameter"], &cfg, &out_dir);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(summary(&out_dir)["converged"], false);
    assert_eq!(rows(&out_dir.join("trace.csv")).len(), 3);
    assert_eq!(
        headers(&out_dir.join("final_point.csv")),
        ["index", "value"]
    );
}

#[test]
fn line_search_failure_exits_5_with_trace() {
    let dir = TempDir::new().unwrap();
    // With no backtracking allowed and an absurd first step, no trial is accepted.
    let cfg = write_config(
        dir.path(),
        r#"{"group": "SO3", "problem": "so3_controlled", "T": 1.0, "N": 5,
            "cost": {"name": "trace_linear", "A": [1, 2, 0, 0, 1, 3, 1, 0, 1]},
            "linesearch": {"gamma0": 1000.0, "max_backtracks": 0}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = run(&["optimize", "--mode", "parameter"], &cfg, &out_dir);
    assert_eq!(
        out.status.code(),
        Some(5),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(rows(&out_dir.join("trace.csv")).len(), 1);
}

#[test]
fn audit_marks_noether_by_applicability() {
    let dir = TempDir::new().unwrap();
    let status = |json: &str| -> Vec<Vec<String>> {
        let cfg = write_config(dir.path(), json);
        let out_dir = dir.path().join("out");
        let out = run(&["audit"], &cfg, &out_dir);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        rows(&out_dir.join("audits.csv"))
    };
    let invariant = status(
        r#"{"problem": "se3_screw", "retraction": "cayley", "T": 1.0, "N": 100, "seed": 3}"#,
    );
    assert_eq!(invariant.len(), 3);
    assert_eq!(invariant[1][0], "noether");
    assert_eq!(invariant[1][3], "pass");
    assert!(invariant[1][1].parse::<f64>().unwrap() <= 1e-12);
    assert!(invariant.iter().all(|r| r[3] == "pass"));

    let generic = status(GRADIENT_LIKE);
    assert_eq!(generic[1][1], "n/a");
    assert_eq!(generic[1][3], "n/a");
    assert_eq!(generic[0][3], "pass");
    assert!(generic[2][1].parse::<f64>().unwrap() <= 1e-6);
}

#[test]
fn invalid_thread_count_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), GRADIENT_LIKE);
    let out = Command::new(env!("CARGO_BIN_EXE_lieadj"))
        .args(["integrate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .env("LIEADJ_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

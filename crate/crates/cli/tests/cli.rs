use std::fs;
use std::path::Path;
use std::process::Command;

use kfp_cli::commands::emit_run;
use kfp_cli::config::{config_to_string, parse_config, parse_config_text};
use kfp_core::mesh::{Formulation, RectDomain};
use kfp_core::solvers::{run, RunConfig};

fn kfp(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_kfp")).args(args).output().expect("binary runs")
}

fn small_run_args(out: &Path) -> Vec<String> {
    [
        "run",
        "--form",
        "selfsimilar",
        "--n",
        "16",
        "--dt",
        "0.05",
        "--t-end",
        "1",
        "--domain",
        "-4,4,-4,4",
        "--out",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([out.display().to_string()])
    .collect()
}

#[test]
fn sigma1_above_one_exits_with_config_error() {
    let out = kfp(&["run", "--sigma1", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma1"));
}

#[test]
fn unknown_config_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    fs::write(&path, "speed = 3\n").unwrap();
    let out = kfp(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("speed"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    fs::write(&path, "dt = 0.02\nn = 64\n").unwrap();
    let p = path.to_str().unwrap();
    let inv = parse_config(["kfp", "run", "--config", p, "--dt", "0.005"]).unwrap();
    assert_eq!(inv.config.dt, 0.005);
    assert_eq!(inv.config.n, 64);
    let inv = parse_config(["kfp", "run", "--config", p]).unwrap();
    assert_eq!(inv.config.dt, 0.02);
}

#[test]
fn config_round_trips_through_file_format() {
    let cfg = RunConfig {
        form: Formulation::Lagrangian,
        domain: RectDomain::new(-3.5, 2.25, -1.0, 7.0).unwrap(),
        n: 48,
        dt: 0.1 + 0.2,
        horizon: 7.25,
        theta: 0.75,
        sigma1: -0.3,
        tol: 1e-9,
        snapshot_stride: 5,
        output: Some("results/a".into()),
        seed: 987654321,
        ..RunConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rt.cfg");
    fs::write(&path, config_to_string(&cfg)).unwrap();
    let inv = parse_config(["kfp", "run", "--config", path.to_str().unwrap()]).unwrap();
    assert_eq!(inv.config, cfg);
    assert_eq!(parse_config_text(&config_to_string(&inv.config)).unwrap().len(), 11);
}

#[test]
fn identical_invocations_give_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let args = small_run_args(dir);
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = kfp(&args);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["norms.csv", "errors.csv"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name} differs");
    }
    let errors = fs::read_to_string(a.path().join("errors.csv")).unwrap();
    assert_eq!(errors.lines().next(), Some("h,dt,time,l2_error,linf_error,order"));
    assert_eq!(errors.lines().count(), 2);
}

#[test]
fn zero_stride_writes_no_grid_files() {
    let dir = tempfile::tempdir().unwrap();
    let args = small_run_args(dir.path());
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(kfp(&args).status.code(), Some(0));
    let grids = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "grid"))
        .count();
    assert_eq!(grids, 0);
}

#[test]
fn positive_stride_writes_parseable_grids() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = small_run_args(dir.path());
    args.extend(["--snapshot-stride".to_string(), "10".to_string()]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(kfp(&args).status.code(), Some(0));
    let first = fs::read_to_string(dir.path().join("field_00000.grid")).unwrap();
    let mut lines = first.lines();
    let header: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
    assert_eq!(&header[..3], &["#", "17", "17"]);
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 17);
    assert!(rows.iter().all(|r| r.split(' ').count() == 17));
    let centre: f64 = rows[8].split(' ').nth(8).unwrap().parse().unwrap();
    assert_eq!(centre, 1.0);
}

#[test]
fn zero_trajectory_norms_are_zero() {
    let cfg = RunConfig {
        n: 8,
        dt: 0.1,
        horizon: 1.0,
        domain: RectDomain::centered_square(3.0).unwrap(),
        ..RunConfig::default()
    };
    let traj = run(&cfg, &|_, _| 0.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_run(dir.path(), &cfg, &traj).unwrap();
    let norms = fs::read_to_string(dir.path().join("norms.csv")).unwrap();
    let mut lines = norms.lines();
    assert_eq!(lines.next(), Some("time,l2,linf"));
    let mut rows = 0;
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(&cols[1..], &["0.0", "0.0"]);
        rows += 1;
    }
    assert_eq!(rows, traj.steps + 1);
}

#[test]
fn unwritable_output_exits_with_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let args = small_run_args(&blocker.join("sub"));
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(kfp(&args).status.code(), Some(3));
}

#[test]
fn kernel_check_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = kfp(&["kernel-check", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let table = fs::read_to_string(dir.path().join("kernel.csv")).unwrap();
    assert_eq!(table.lines().count(), 13);
    let report = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("agreement to 1e-6: PASS"));
}

//! End-to-end tests of the `activeflow` binary and the run driver.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use activeflow::cli::{simulate, SimulateOptions, DIAGNOSTICS_FILE, SUMMARY_FILE};
use activeflow::config::RunConfig;
use activeflow::io::{self, read_csv, read_snapshot, snapshot_name};

fn config_json(dir: &Path, body: &str) -> String {
    format!(
        r#"{{
            "grid": {{"n_x": 8, "n_theta": 8}},
            {body},
            "output_dir": {out:?}
        }}"#,
        out = dir.join("out").to_str().unwrap()
    )
}

const RANDOM_RUN: &str = r#"
    "params": {"pe": 0.05, "de": 1.0, "dt": 0.01},
    "initial": {"kind": "random_bandlimited", "m": 20.0, "eps": 0.5, "max_mode": 2, "seed": 42},
    "t_end": 0.5,
    "snapshot_stride": 10"#;

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, config_json(dir, body)).unwrap();
    path
}

fn activeflow(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_activeflow"))
        .args(args)
        .arg("--config")
        .arg(config)
        .env("ACTIVEFLOW_THREADS", "2")
        .output()
        .unwrap()
}

fn stderr_kind(out: &Output) -> String {
    // log lines may precede the error object
    let text = String::from_utf8_lossy(&out.stderr);
    let last = text.lines().last().expect("stderr is not empty");
    let v: serde_json::Value = serde_json::from_str(last).expect("error line is JSON");
    v["error"]["kind"].as_str().unwrap().to_string()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn simulate_writes_csv_snapshots_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), RANDOM_RUN);
    let out = activeflow(&["simulate"], &cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert_eq!(summary["steps"], 50);

    let run = dir.path().join("out");
    let csv = fs::read_to_string(run.join(DIAGNOSTICS_FILE)).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "t,mass,l2_to_const,linf,rho_min,rho_max,grad_l2,spectral_tail,lp_0,lp_1,lp_2,lp_3,lp_4,lp_5,lp_6"
    );
    assert_eq!(csv.lines().count(), 52);
    for step in [0, 10, 20, 30, 40, 50] {
        let (h, f) = read_snapshot(&run.join(snapshot_name(step))).unwrap();
        assert_eq!(h.step, step);
        assert_eq!(f.values().len(), 8 * 8 * 8);
    }
    assert!(!run.join(snapshot_name(5)).exists());
    let on_disk: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(on_disk, summary);
    assert!(summary["max_relative_mass_drift"].as_f64().unwrap() < 1e-13);
}

#[test]
fn identical_configs_give_identical_diagnostics() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = activeflow(&["simulate"], &write_config(d.path(), RANDOM_RUN));
        assert_eq!(out.status.code(), Some(0));
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("out").join(DIAGNOSTICS_FILE)).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn constant_data_gives_constant_rows() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
        "params": {"pe": 0.1, "de": 1.0, "dt": 0.05},
        "initial": {"kind": "constant", "m": 3.0},
        "t_end": 1.0"#;
    let out = activeflow(&["simulate"], &write_config(dir.path(), body));
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("out").join(DIAGNOSTICS_FILE)).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 21);
    let tail = |r: &str| r.split_once(',').unwrap().1.to_string();
    assert!(rows.iter().all(|r| tail(r) == tail(rows[0])));
}

#[test]
fn resume_reproduces_an_uninterrupted_run() {
    let full_dir = tempfile::tempdir().unwrap();
    let part_dir = tempfile::tempdir().unwrap();
    let body = format!("{RANDOM_RUN}, \"checkpoint_every\": 7");
    let full: RunConfig = RunConfig::from_json(&config_json(full_dir.path(), &body)).unwrap();
    let part: RunConfig = RunConfig::from_json(&config_json(part_dir.path(), &body)).unwrap();

    simulate(&full, SimulateOptions::default()).unwrap().unwrap();
    let stopped = simulate(
        &part,
        SimulateOptions {
            resume: false,
            stop_after: Some(24),
        },
    )
    .unwrap();
    assert!(stopped.is_none());
    let meta: io::CheckpointMeta =
        serde_json::from_str(&fs::read_to_string(part.output_dir.join(io::CHECKPOINT_META)).unwrap()).unwrap();
    assert_eq!(meta.step, 21);
    simulate(
        &part,
        SimulateOptions {
            resume: true,
            stop_after: None,
        },
    )
    .unwrap()
    .unwrap();

    let (_, a) = read_snapshot(&full.output_dir.join(snapshot_name(50))).unwrap();
    let (_, b) = read_snapshot(&part.output_dir.join(snapshot_name(50))).unwrap();
    assert!(a.max_abs_diff(&b) <= 1e-14);
    let ra = read_csv(&full.output_dir.join(DIAGNOSTICS_FILE)).unwrap();
    let rb = read_csv(&part.output_dir.join(DIAGNOSTICS_FILE)).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn resume_refuses_a_changed_config() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{RANDOM_RUN}, \"checkpoint_every\": 5");
    let out = activeflow(&["simulate"], &write_config(dir.path(), &body));
    assert_eq!(out.status.code(), Some(0));
    let changed = body.replace("\"seed\": 42", "\"seed\": 43");
    let out = activeflow(&["simulate", "--resume"], &write_config(dir.path(), &changed));
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_kind(&out), "CheckpointMismatch");
}

#[test]
fn blowup_exits_with_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
        "params": {"pe": 1000.0, "de": 1.0, "dt": 5.0},
        "initial": {"kind": "random_bandlimited", "m": 20.0, "eps": 0.9, "max_mode": 3, "seed": 1},
        "t_end": 100.0"#;
    let out = activeflow(&["simulate"], &write_config(dir.path(), body));
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_kind(&out), "NumericalBlowup");
}

#[test]
fn bad_configs_exit_with_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &RANDOM_RUN.replace("0.05", "\"abc\""));
    let out = activeflow(&["simulate"], &cfg);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_kind(&out), "ParseError");

    let path = dir.path().join("odd.json");
    fs::write(
        &path,
        config_json(dir.path(), RANDOM_RUN).replace("\"n_x\": 8", "\"n_x\": 7"),
    )
    .unwrap();
    let out = activeflow(&["decay"], &path);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_kind(&out), "ValidationError");

    let out = activeflow(&["simulate"], &dir.path().join("missing.json"));
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_kind(&out), "IoError");
}

#[test]
fn invalid_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_activeflow"))
        .args(["decay", "--config"])
        .arg(write_config(dir.path(), RANDOM_RUN))
        .env("ACTIVEFLOW_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn decay_at_zero_pe() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
        "params": {"pe": 0.0, "de": 1.0, "dt": 0.05},
        "initial": {"kind": "single_mode", "m": 1.0, "eps": 0.1, "k": [1, 0, 0]},
        "t_end": 4.0"#;
    let out = activeflow(&["decay"], &write_config(dir.path(), body));
    assert_eq!(out.status.code(), Some(0));
    let r = stdout_json(&out);
    assert_eq!(r["kappa"].as_f64(), Some(0.25));
    assert!((r["measured_rate"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(r["bound_satisfied"], true);
}

#[test]
fn stationary_from_constant() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
        "params": {"pe": 0.05, "de": 1.0, "dt": "auto"},
        "initial": {"kind": "constant", "m": 2.0},
        "t_end": 10.0"#;
    let out = activeflow(&["stationary"], &write_config(dir.path(), body));
    assert_eq!(out.status.code(), Some(0));
    let r = stdout_json(&out);
    assert_eq!(r["converged"], true);
    assert_eq!(r["residual"].as_f64(), Some(0.0));
    assert_eq!(r["t"].as_f64(), Some(0.0));
}

#[test]
fn stationary_far_above_threshold_reports_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
        "params": {"pe": 5.0, "de": 1.0, "dt": 0.001},
        "initial": {"kind": "random_bandlimited", "m": 20.0, "eps": 0.5, "max_mode": 2, "seed": 2},
        "t_end": 0.05"#;
    let out = activeflow(&["stationary"], &write_config(dir.path(), body));
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["converged"], false);
}

#[test]
fn oracle_compare_at_eight_cubed_passes() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
        "params": {"pe": 0.05, "de": 1.0, "dt": 0.01},
        "initial": {"kind": "random_bandlimited", "m": 20.0, "eps": 0.5, "max_mode": 1, "seed": 7},
        "t_end": 0.1"#;
    let out = activeflow(&["oracle-compare"], &write_config(dir.path(), body));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = stdout_json(&out);
    assert_eq!(r["pass"], true);
    assert!(r["max_diff"].as_f64().unwrap() <= 1e-3);
    assert!(r["oracle_mass_drift"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn verify_at_zero_pe_passes_analytic_checks_and_skips_the_rest() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
        "params": {"pe": 0.0, "de": 1.0, "dt": 0.01},
        "initial": {"kind": "constant", "m": 1.0},
        "t_end": 1.0"#;
    let out = activeflow(&["verify"], &write_config(dir.path(), body));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 11);
    assert!(
        rows.iter().all(|r| r.starts_with("PASS") || r.starts_with("SKIP")),
        "{text}"
    );
    assert!(rows.iter().any(|r| r.starts_with("SKIP")));
}

#[test]
fn truncation_ladder_is_reported_for_the_configured_window() {
    let dir = tempfile::tempdir().unwrap();
    let body = RANDOM_RUN.replace("\"snapshot_stride\": 10", "\"snapshot_stride\": 2")
        + r#", "diagnostics": {"truncation": {"window": [0.2, 0.5], "k_max": 4}}"#;
    let out = activeflow(&["simulate"], &write_config(dir.path(), &body));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let ladder = &stdout_json(&out)["truncation"];
    assert_eq!(ladder["k_max"], 4);
    let e: Vec<f64> = ladder["energies"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(e.len(), 5);
    assert!(e.windows(2).all(|w| w[1] <= w[0]));
}

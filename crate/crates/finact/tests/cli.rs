//! Black-box tests of the `finact` binary: exit codes, artifact schemas, and
//! scenario validation, all through the real process boundary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Output;

use tempfile::TempDir;

const PLANT: &str = r#""plant": {"normalized": {"c1": 2.919e-9, "c2": 2.919e-9, "k": 439.3, "gamma": 0.0, "x0": 0.01}}"#;

fn finact<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    std::process::Command::new(env!("CARGO_BIN_EXE_finact"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let p = dir.path().join("scenario.json");
    fs::write(&p, text).unwrap();
    p
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn run_ok(cmd: &str, config: &Path, out_dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        cmd,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let out = finact(&args);
    assert!(
        out.status.success(),
        "{cmd} failed with {:?}: {}",
        out.status.code(),
        stderr_of(&out)
    );
    out
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn analyze_reports_the_fixed_point_structure() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(&tmp, &format!("{{{PLANT}}}"));
    let out_dir = tmp.path().join("out");
    let out = run_ok("analyze", &config, &out_dir, &["--no-meta"]);

    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("wrote"), "stdout: {stdout}");

    let report = read_json(&out_dir.join("equilibrium.json"));
    let fps = report["fixed_points"].as_array().unwrap();
    assert_eq!(fps.len(), 3);
    let kinds: Vec<&str> = fps.iter().map(|fp| fp["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["saddle", "center", "saddle"]);
    assert_eq!(report["criticality"]["regime"], "oscillatory");
}

#[test]
fn meta_stamp_is_opt_out() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(&tmp, &format!("{{{PLANT}}}"));

    let with_meta = tmp.path().join("with");
    run_ok("analyze", &config, &with_meta, &[]);
    let stamped = read_json(&with_meta.join("equilibrium.json"));
    assert!(stamped.get("generated_at_unix_s").is_some());

    let without = tmp.path().join("without");
    run_ok("analyze", &config, &without, &["--no-meta"]);
    let clean = read_json(&without.join("equilibrium.json"));
    assert!(clean.get("generated_at_unix_s").is_none());
}

#[test]
fn simulate_writes_the_trajectory_schema() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        &tmp,
        &format!(
            r#"{{{PLANT}, "run": {{"t_end": 2.0, "ics": [{{"x": 0.002, "v": 0.0}}, {{"x": 0.001, "v": 0.0}}]}}}}"#
        ),
    );
    let out_dir = tmp.path().join("out");
    let out = run_ok("simulate", &config, &out_dir, &["--no-meta"]);

    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("traj_000.csv") && stdout.contains("traj_001.csv"));

    let text = fs::read_to_string(out_dir.join("traj_000.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x,v,f_control,current"));
    assert_eq!(lines.next(), Some("0,0.002,0,0,0"));
    // Samples every millisecond from 0 through 2.0 inclusive.
    assert_eq!(text.lines().count(), 1 + 2001);
    for row in text.lines().skip(1) {
        assert_eq!(row.split(',').count(), 5, "row: {row}");
    }
}

#[test]
fn capture_in_simulate_exits_zero_with_an_event_row() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        &tmp,
        &format!(r#"{{{PLANT}, "run": {{"t_end": 5.0, "ics": [{{"x": 0.004, "v": 0.0}}]}}}}"#),
    );
    let out_dir = tmp.path().join("out");
    run_ok("simulate", &config, &out_dir, &["--no-meta"]);

    let text = fs::read_to_string(out_dir.join("traj_000.csv")).unwrap();
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("# event,capture,"), "last line: {last}");
    // The run stops at the magnet, well before the five-second horizon.
    assert!(text.lines().count() < 5000);
}

#[test]
fn malformed_json_exits_two_with_a_line_anchor() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(&tmp, "{ \"plant\": { nope");
    let out_dir = tmp.path().join("out");
    let out = finact([
        "analyze",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("config error"), "stderr: {err}");
    assert!(err.contains("line"), "stderr: {err}");
}

#[test]
fn unknown_scenario_keys_exit_two() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(&tmp, &format!(r#"{{{PLANT}, "plannt": {{}}}}"#));
    let out_dir = tmp.path().join("out");
    let out = finact([
        "analyze",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("unknown field"));
}

#[test]
fn missing_run_block_exits_two() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(&tmp, &format!("{{{PLANT}}}"));
    let out_dir = tmp.path().join("out");
    let out = finact([
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("`run` block"));
}

#[test]
fn oversized_amplitude_exits_two_and_reports_the_bound() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        &tmp,
        &format!(
            r#"{{{PLANT}, "control": {{"amplitude": 0.01, "ics": [{{"x": 0.0, "v": 0.0}}]}}}}"#
        ),
    );
    let out_dir = tmp.path().join("out");
    let out = finact([
        "control",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("must stay below the oscillatory bound"), "stderr: {err}");
    // The message carries the computed saddle position.
    assert!(err.contains("0.00348"), "stderr: {err}");
}

#[test]
fn q_and_gamma_overrides_are_exclusive() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        &tmp,
        &format!(
            r#"{{{PLANT}, "control": {{"amplitude": 0.002, "q": 0.5, "gamma": 10.0,
                "ics": [{{"x": 0.002, "v": 0.0}}]}}}}"#
        ),
    );
    let out_dir = tmp.path().join("out");
    let out = finact([
        "control",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("not both"));
}

#[test]
fn damped_plant_cannot_build_a_freqtable() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        &tmp,
        r#"{"plant": {"normalized": {"c1": 2.919e-9, "c2": 2.919e-9, "k": 439.3,
            "gamma": 5.0, "x0": 0.01}},
            "freqtable": {"amplitudes": [0.001, 0.002]}}"#,
    );
    let out_dir = tmp.path().join("out");
    let out = finact([
        "freqtable",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("undamped"));
}

#[test]
fn destabilizing_gains_exit_three_but_write_the_trajectory() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        &tmp,
        &format!(
            r#"{{{PLANT}, "control": {{"amplitude": 0.0027866, "frequency": 1.7468,
                "t_end": 3.0, "gains": {{"kp": -2000.0, "kd": 0.0, "ki": 0.0}},
                "ics": [{{"x": 0.0027866, "v": 0.0}}]}}}}"#
        ),
    );
    let out_dir = tmp.path().join("out");
    let out = finact([
        "control",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--no-meta",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_of(&out).contains("numerical failure"));

    // The truncated trajectory still lands on disk, event row included.
    let text = fs::read_to_string(out_dir.join("control_000.csv")).unwrap();
    assert!(text.lines().last().unwrap().starts_with("# event,"));
}

#[test]
fn unwritable_output_directory_exits_four() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(&tmp, &format!("{{{PLANT}}}"));
    let blocker = tmp.path().join("blocker");
    fs::write(&blocker, "not a directory").unwrap();
    let out = finact([
        "analyze",
        "--config",
        config.to_str().unwrap(),
        "--out",
        blocker.join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr_of(&out).contains("io error"));
}

#[test]
fn freqtable_csv_has_the_table_schema() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        &tmp,
        &format!(
            r#"{{{PLANT}, "freqtable": {{"amplitudes": [0.001, 0.0015, 0.002, 0.0025, 0.003],
                "t_sim": 5.0}}}}"#
        ),
    );
    let out_dir = tmp.path().join("out");
    run_ok("freqtable", &config, &out_dir, &["--no-meta"]);

    let text = fs::read_to_string(out_dir.join("freqtable.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("amplitude,frequency"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let mut cols = l.split(',');
            (
                cols.next().unwrap().parse().unwrap(),
                cols.next().unwrap().parse().unwrap(),
            )
        })
        .collect();
    assert_eq!(rows.len(), 5);
    for pair in rows.windows(2) {
        assert!(pair[1].0 > pair[0].0, "amplitudes out of order");
        assert!(pair[1].1 < pair[0].1, "frequencies must fall with amplitude");
    }
}

#[test]
fn json_format_emits_parallel_arrays() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        &tmp,
        &format!(r#"{{{PLANT}, "run": {{"t_end": 1.0, "ics": [{{"x": 0.002, "v": 0.0}}]}}}}"#),
    );
    let out_dir = tmp.path().join("out");
    run_ok("simulate", &config, &out_dir, &["--format", "json", "--no-meta"]);

    let traj = read_json(&out_dir.join("traj_000.json"));
    let n = traj["t"].as_array().unwrap().len();
    assert!(n > 0);
    for col in ["x", "v", "f_control", "current"] {
        assert_eq!(traj[col].as_array().unwrap().len(), n, "column {col}");
    }
    assert_eq!(traj["events"].as_array().unwrap().len(), 0);
}

#[test]
fn design_report_round_trips_the_catalog_numbers() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        &tmp,
        &format!(
            r#"{{{PLANT}, "design": {{
                "magnet": {{"br": 1.0, "radius": 0.002, "length": 0.002}},
                "beam": {{"youngs_modulus": 2e8, "width": 0.01, "thickness": 5e-4,
                          "span": 0.03, "load_position": 0.015}},
                "mass": 0.0843}}}}"#
        ),
    );
    let out_dir = tmp.path().join("out");
    run_ok("design", &config, &out_dir, &["--no-meta"]);

    let doc = read_json(&out_dir.join("design.json"));
    let mc = doc["magnet_constant"].as_f64().unwrap();
    assert!((mc - 2.4e-10).abs() < 1e-19, "magnet constant {mc:e}");
    let k = doc["beam_stiffness"].as_f64().unwrap();
    assert!((k - 37.03703703703704).abs() < 1e-9, "beam stiffness {k}");
    let c_norm = doc["normalized"]["c"].as_f64().unwrap();
    assert!((c_norm - mc / 0.0843).abs() < 1e-22, "normalized c {c_norm:e}");
    assert!(doc.get("sizing").is_none(), "no qs were requested");
}

#[test]
fn asymmetry_sweep_writes_a_row_per_delta() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        &tmp,
        &format!(r#"{{{PLANT}, "sweep": {{"asymmetry": {{"deltas": [0.0, 0.1]}}}}}}"#),
    );
    let out_dir = tmp.path().join("out");
    run_ok("sweep", &config, &out_dir, &["--no-meta"]);

    let text = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("delta,center,saddle_neg,saddle_pos"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("0,0,"), "symmetric row: {}", rows[0]);
}

#[test]
fn damping_sweep_emits_force_per_q() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        &tmp,
        &format!(
            r#"{{{PLANT},
                "control": {{"amplitude": 0.0027866, "frequency": 1.7468, "t_end": 3.0,
                             "ics": [{{"x": 0.0027866, "v": 0.0}}]}},
                "sweep": {{"damping": {{"qs": [0.0, 0.2]}}}}}}"#
        ),
    );
    let out_dir = tmp.path().join("out");
    run_ok("sweep", &config, &out_dir, &["--no-meta"]);

    let text = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("q,gamma,f_ctrl_max,x_at_max,steady_amplitude"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][1], 0.0, "Q = 0 row must be undamped");
    assert!(rows[1][1] > 0.0, "Q = 0.2 row must carry damping");
}

//! End-to-end tests of the `popdyn` binary: exit codes, artifact layout,
//! reproducibility receipts, and the documented output formats.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn popdyn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_popdyn"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

const FLAT_QUALITY_SCENARIO: &str = r#"{
  "graph": {"type": "erdos_renyi", "n": 6, "p": 0.4, "seed": 2},
  "params": {"alpha": [0.6,0.6,0.6,0.6,0.6,0.6],
             "beta": [0,0,0,0,0,0],
             "gamma": [0.4,0.4,0.4,0.4,0.4,0.4]},
  "quality": [0.7, 0.2],
  "x0": {"uniform_seed": 8}
}"#;

#[test]
fn malformed_json_exits_2_with_position() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "bad.json", "{\n  \"params\": oops\n}");
    let out = popdyn(tmp.path(), &["simulate", "bad.json"]);
    assert_eq!(exit_code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("line 2"), "stderr: {err}");
    assert!(err.contains("column"), "stderr: {err}");
}

#[test]
fn all_zero_initial_state_exits_3_at_t0() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "zero.json",
        r#"{"graph": {"type": "explicit", "rows": [[1.0]]},
            "params": {"alpha": [0.2], "beta": [0.3], "gamma": [0.5]},
            "quality": [0.4], "x0": {"explicit": [[0.0]]}}"#,
    );
    let out = popdyn(tmp.path(), &["simulate", "zero.json"]);
    assert_eq!(exit_code(&out), 3);
    assert!(stderr(&out).contains("t = 0"), "stderr: {}", stderr(&out));
}

#[test]
fn fully_networked_equilibrium_exits_4_with_empty_deficiency() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "allone.json",
        r#"{"graph": {"type": "erdos_renyi", "n": 4, "p": 0.5, "seed": 1},
            "params": {"alpha": [1,1,1,1], "beta": [0,0,0,0], "gamma": [0,0,0,0]},
            "quality": [0.5], "x0": {"uniform_seed": 3}}"#,
    );
    let out = popdyn(tmp.path(), &["equilibrium", "allone.json"]);
    assert_eq!(exit_code(&out), 4);
    let v = stdout_json(&out);
    assert_eq!(v["regime"], "ambiguous");
    assert_eq!(v["hypotheses"]["deficiency"].as_array().unwrap().len(), 0);
    assert_eq!(v["hypotheses"]["schur_stable"], Value::Bool(false));
}

#[test]
fn truncated_horizon_verify_exits_5_with_honest_report() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "short.json",
        r#"{"params": {"protocol": "fig1", "seed": 2}, "horizon": 3}"#,
    );
    let out = popdyn(tmp.path(), &["--out-dir", "v", "verify", "short.json"]);
    assert_eq!(exit_code(&out), 5);
    let report: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("v/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["converged"], Value::Bool(false));
    assert!(report["theory_delta"].as_f64().unwrap() > 1e-8);
}

#[test]
fn preset_simulate_reaches_quality_shares_and_manifest_digest_matches() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "s.json",
        r#"{"params": {"protocol": "fig1", "seed": 41}}"#,
    );
    let out = popdyn(tmp.path(), &["--out-dir", "run", "simulate", "s.json"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));

    let pi = fs::read_to_string(tmp.path().join("run/pi.csv")).unwrap();
    let tail: Vec<f64> = pi
        .lines()
        .rev()
        .take(3)
        .map(|line| line.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    // Lines come back in reverse influencer order.
    assert!((tail[2] - 0.2).abs() <= 1e-6, "pi tail: {tail:?}");
    assert!((tail[1] - 7.0 / 15.0).abs() <= 1e-6, "pi tail: {tail:?}");
    assert!((tail[0] - 1.0 / 3.0).abs() <= 1e-6, "pi tail: {tail:?}");

    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("run/manifest.json")).unwrap())
            .unwrap();
    let recomputed = hex::encode(Sha256::digest(fs::read(tmp.path().join("s.json")).unwrap()));
    assert_eq!(
        manifest["scenario_digest_sha256"],
        Value::String(recomputed)
    );
    assert_eq!(manifest["seed"], 41);
    assert_eq!(manifest["command"], "simulate");
    let report: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("run/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["converged"], Value::Bool(true));
}

#[test]
fn rerunning_produces_byte_identical_csv_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "s.json",
        r#"{"params": {"protocol": "fig3", "seed": 5}}"#,
    );
    let a = popdyn(tmp.path(), &["--out-dir", "a", "simulate", "s.json"]);
    let b = popdyn(tmp.path(), &["--out-dir", "b", "simulate", "s.json"]);
    assert_eq!(exit_code(&a), 0);
    assert_eq!(exit_code(&b), 0);
    for name in ["x.csv", "pi.csv", "report.json"] {
        let left = fs::read(tmp.path().join("a").join(name)).unwrap();
        let right = fs::read(tmp.path().join("b").join(name)).unwrap();
        assert_eq!(left, right, "{name} differs between reruns");
    }
}

#[test]
fn series_closed_form_matches_brute_force() {
    let tmp = tempfile::tempdir().unwrap();
    let out = popdyn(tmp.path(), &["series", "2", "0.5"]);
    assert_eq!(exit_code(&out), 0);
    let v = stdout_json(&out);
    assert_eq!(v["value"].as_f64().unwrap(), 6.0);
    assert_eq!(v["coefficients"], serde_json::json!([1.0, 1.0]));
    assert!(v["relative_difference"].as_f64().unwrap() <= 1e-12);

    let geometric = popdyn(tmp.path(), &["series", "0", "0.5"]);
    let g = stdout_json(&geometric);
    assert_eq!(g["value"].as_f64().unwrap(), 2.0);
    assert_eq!(g["coefficients"], Value::Null);
}

#[test]
fn series_rejects_lambda_outside_the_unit_interval() {
    let tmp = tempfile::tempdir().unwrap();
    for lambda in ["1.5", "0", "1"] {
        let out = popdyn(tmp.path(), &["series", "1", lambda]);
        assert_eq!(exit_code(&out), 2, "lambda = {lambda}");
    }
}

#[test]
fn flat_quality_equilibrium_emits_scaled_ones() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "flat.json", FLAT_QUALITY_SCENARIO);
    let out = popdyn(tmp.path(), &["equilibrium", "flat.json"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let v = stdout_json(&out);
    assert_eq!(v["regime"], "no_recommendation");
    let flat = v["fixed_point"]["x_flat"].as_array().unwrap();
    assert!((flat[0].as_f64().unwrap() - 0.7).abs() <= 1e-10);
    assert!((flat[1].as_f64().unwrap() - 0.2).abs() <= 1e-10);
}

#[test]
fn consensus_preset_verify_passes_with_small_gap() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "f2.json",
        r#"{"params": {"protocol": "fig2", "seed": 6}}"#,
    );
    let out = popdyn(tmp.path(), &["--out-dir", "v", "verify", "f2.json"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let report: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("v/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["regime"], "no_quality");
    for gap in report["terminal"]["consensus_gap"].as_array().unwrap() {
        assert!(gap.as_f64().unwrap() <= 1e-8);
    }
    assert_eq!(report["certificate"]["hypotheses_met"], Value::Bool(true));
}

#[test]
fn parallel_batch_writes_stem_subdirectories_and_reports_worst_code() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "a.json",
        r#"{"params": {"protocol": "fig1", "seed": 1}}"#,
    );
    write(
        tmp.path(),
        "b.json",
        r#"{"params": {"protocol": "fig1", "seed": 2}}"#,
    );
    let ok = popdyn(
        tmp.path(),
        &[
            "--out-dir",
            "batch",
            "--jobs",
            "2",
            "simulate",
            "a.json",
            "b.json",
        ],
    );
    assert_eq!(exit_code(&ok), 0, "stderr: {}", stderr(&ok));
    assert!(tmp.path().join("batch/a/report.json").exists());
    assert!(tmp.path().join("batch/b/report.json").exists());

    write(tmp.path(), "bad.json", "{");
    let mixed = popdyn(
        tmp.path(),
        &[
            "--out-dir",
            "mix",
            "--jobs",
            "2",
            "simulate",
            "a.json",
            "bad.json",
        ],
    );
    assert_eq!(exit_code(&mixed), 2);
    assert!(tmp.path().join("mix/a/report.json").exists());
}

#[test]
fn seed_override_rewrites_sampling_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    // No seed anywhere: resolvable only because the override supplies one.
    write(tmp.path(), "s.json", r#"{"params": {"protocol": "fig1"}}"#);
    let bare = popdyn(tmp.path(), &["--out-dir", "bare", "simulate", "s.json"]);
    assert_eq!(exit_code(&bare), 2);

    let out = popdyn(
        tmp.path(),
        &[
            "--out-dir",
            "o",
            "--seed-override",
            "99",
            "simulate",
            "s.json",
        ],
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("o/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 99);
    assert_eq!(manifest["seed_override"], 99);

    // Same override, seeded file: the override wins, so outputs agree.
    write(
        tmp.path(),
        "t.json",
        r#"{"params": {"protocol": "fig1", "seed": 7}}"#,
    );
    let out2 = popdyn(
        tmp.path(),
        &[
            "--out-dir",
            "p",
            "--seed-override",
            "99",
            "simulate",
            "t.json",
        ],
    );
    assert_eq!(exit_code(&out2), 0);
    assert_eq!(
        fs::read(tmp.path().join("o/x.csv")).unwrap(),
        fs::read(tmp.path().join("p/x.csv")).unwrap()
    );
}

#[test]
fn generated_graph_pastes_into_a_scenario_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = popdyn(tmp.path(), &["gen-graph", "4", "0.5", "7"]);
    assert_eq!(exit_code(&out), 0);
    let graph = stdout_json(&out);
    assert_eq!(graph["type"], "explicit");
    let rows = graph["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for row in rows {
        let sum: f64 = row
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .sum();
        assert!((sum - 1.0).abs() <= 1e-12, "row sum {sum}");
    }

    let scenario = serde_json::json!({
        "graph": graph,
        "params": {"alpha": [0.3, 0.3, 0.3, 0.3],
                   "beta": [0.3, 0.3, 0.3, 0.3],
                   "gamma": [0.4, 0.4, 0.4, 0.4]},
        "quality": [0.5, 0.8],
        "x0": {"uniform_seed": 1},
        "horizon": 2000
    });
    write(tmp.path(), "pasted.json", &scenario.to_string());
    let run = popdyn(tmp.path(), &["--out-dir", "r", "verify", "pasted.json"]);
    assert_eq!(exit_code(&run), 0, "stderr: {}", stderr(&run));
}

#[test]
fn closing_the_output_pipe_early_ends_the_process_quietly() {
    use std::io::Read;
    use std::process::Stdio;

    let tmp = tempfile::tempdir().unwrap();
    // 100 nodes pretty-print to well over a pipe buffer, so the writer is
    // still mid-stream when the reader hangs up.
    let mut child = Command::new(env!("CARGO_BIN_EXE_popdyn"))
        .current_dir(tmp.path())
        .args(["gen-graph", "100", "0.3", "1"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary spawns");
    let mut head = [0u8; 16];
    let mut out = child.stdout.take().unwrap();
    out.read_exact(&mut head).unwrap();
    drop(out);

    let status = child.wait().unwrap();
    let mut err = String::new();
    child
        .stderr
        .take()
        .unwrap()
        .read_to_string(&mut err)
        .unwrap();
    assert!(status.success(), "status {status:?}, stderr: {err}");
    assert!(err.is_empty(), "stderr: {err}");
    assert_eq!(&head[..1], b"{");
}

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gfield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gfield"))
        .args(args)
        .env("GFIELD_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json output")
}

#[test]
fn expect_square_on_unit_box() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "e.json", r#"{"phi":"x1^2","regions":[{"box":{"lo":[0,0],"hi":[1,1]}}]}"#);
    let v = stdout_json(&gfield(&["expect", "--config", &cfg]));
    let row = &v["rows"][0];
    assert!((row["value_upper"].as_f64().unwrap() - 1.0).abs() < 1e-3);
    assert!((row["value_lower"].as_f64().unwrap() - 0.5).abs() < 1e-3);
    assert_eq!(row["engine"], "pde");
}

#[test]
fn oracle_agrees_with_pde() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "e.json", r#"{"phi":"x1^2","regions":[{"box":{"lo":[0],"hi":[2]}}]}"#);
    let v = stdout_json(&gfield(&["oracle", "--config", &cfg]));
    let row = &v["rows"][0];
    assert!((row["value_upper"].as_f64().unwrap() - 2.0).abs() < 1e-2);
    assert_eq!(row["engine"], "oracle");
}

#[test]
fn malformed_payload_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "b.json", r#"{"phi":"x1^+","regions":[{"box":{"lo":[0],"hi":[1]}}]}"#);
    let out = gfield(&["expect", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("position 3"), "{err}");
}

#[test]
fn unknown_config_field_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "b.json", r#"{"phi":"x1","regoins":[]}"#);
    let out = gfield(&["expect", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn cfl_violation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"phi":"x1^2","regions":[{"box":{"lo":[0],"hi":[1]}}],"grid":{"h":0.01,"dt":0.01}}"#,
    );
    let out = gfield(&["expect", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn whitenoise_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "k.json", r#"{"suites":["whitenoise-axioms","integral-isometry"]}"#);
    let v = stdout_json(&gfield(&["check", "--config", &cfg]));
    assert_eq!(v["passed"], true);
    assert_eq!(v["suites"].as_array().unwrap().len(), 2);
}

#[test]
fn unknown_suite_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "k.json", r#"{"suites":["no-such-suite"]}"#);
    assert_eq!(gfield(&["check", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn outputs_are_byte_reproducible_without_timing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "e.json",
        r#"{"phi":["x1^2","max(x1, x2)"],"regions":[{"box":{"lo":[0,0],"hi":[1,1]}},{"box":{"lo":[0.5,0],"hi":[1.5,1]}}],"output":{"format":"ldjson"}}"#,
    );
    let mut contents = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = gfield(&["expect", "--config", &cfg, "--no-timing", "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success());
        contents.push(std::fs::read(out_dir.join("expect.ldjson")).unwrap());
    }
    assert_eq!(contents[0], contents[1]);
    assert_eq!(String::from_utf8_lossy(&contents[0]).lines().count(), 2);
}

#[test]
fn simulate_writes_csv_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.json", r#"{"lattice":{"extent":[1,1],"counts":[2,2]},"paths":3,"seed":7}"#);
    let out = gfield(&["simulate", "--config", &cfg]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x1,x2,value,path_id"));
    assert_eq!(lines.count(), 3 * 9);
    let again = gfield(&["simulate", "--config", &cfg]);
    assert_eq!(text.as_bytes(), &again.stdout[..]);
}

#[test]
fn st_integral_rejects_non_adapted_process() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "p.json",
        r#"{"times":[0,1,2],"cells":[{"box":{"lo":[0],"hi":[1]}}],"process":{"coefficients":[["1"],["x2"]]}}"#,
    );
    let out = gfield(&["st-integral", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not adapted"));
}

#[test]
fn st_expect_reports_layered_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.json",
        r#"{"times":[0,1,2],"cells":[{"box":{"lo":[0],"hi":[2]}}],"phi":"x2^2","conditional":{"t":1,"points":[[0.3,0.0]]}}"#,
    );
    let v = stdout_json(&gfield(&["st-expect", "--config", &cfg]));
    let row = &v["rows"][0];
    assert!((row["value_upper"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert!((row["value_lower"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn mismatched_command_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "m.json", r#"{"command":"simulate","phi":"x1"}"#);
    assert_eq!(gfield(&["expect", "--config", &cfg]).status.code(), Some(2));
}

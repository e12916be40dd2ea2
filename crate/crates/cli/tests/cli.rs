use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn supercal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_supercal"))
        .args(args)
        .output()
        .expect("spawn supercal")
}

fn json_ok(args: &[&str]) -> Value {
    let out = supercal(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const SOLVE: &str = r#"{
    "medium": {"n": 1, "p": 1.5},
    "grid": {"r_max": 4, "intervals": 40},
    "times": {"t0": 0.5, "t1": 1, "steps": 20},
    "data": {"family": "sbb"},
    "output": "u.csv"
}"#;

#[test]
fn exponents_lambda() {
    let v = json_ok(&["exponents", "--n", "2", "--p", "1.5"]);
    assert_eq!(v["lambda"].as_f64(), Some(0.5));
    assert_eq!(v["q_barenblatt"].as_f64(), Some(1.25));
    assert_eq!(v["regime"], "SupercriticalFast");
}

#[test]
fn p_one_is_invalid() {
    let out = supercal(&["exponents", "--n", "2", "--p", "1.0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("p must be"));
}

#[test]
fn moser_ladder() {
    let v = json_ok(&["moser", "--n", "2", "--p", "1.5", "--s0", "0.7"]);
    assert_eq!(v["first_ge_one"].as_u64(), Some(5));
    let s5 = v["steps"][5].as_f64().unwrap();
    assert!((s5 - 1.21377).abs() < 1e-5, "{s5}");
}

#[test]
fn moser_below_fixed_point_is_invalid() {
    let out = supercal(&["moser", "--n", "2", "--p", "1.5", "--s0", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn classify_point_source_is_m() {
    let v = json_ok(&["classify", "--family", "ips", "--n", "2", "--p", "1.5"]);
    assert_eq!(v["verdict"], "ClassM");
}

#[test]
fn classify_zero_extended_barenblatt_is_b() {
    let v = json_ok(&["classify", "--family", "sbb", "--n", "2", "--p", "1.5", "--zero-extend"]);
    assert_eq!(v["verdict"], "ClassB");
}

#[test]
fn classify_needs_a_source() {
    assert_eq!(supercal(&["classify"]).status.code(), Some(2));
}

#[test]
fn eval_table() {
    let dir = tempfile::tempdir().unwrap();
    let points = write(dir.path(), "pts.csv", "r,t\n1.0,1.0\n0.0,1.0\n");
    let out = supercal(&["eval", "--family", "ips", "--n", "2", "--p", "1.5", "--points", &points]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    // u(1,1) = c^{1/(2-p)} = (√3/2)² = 3/4.
    let v: f64 = lines[1].split(',').nth(2).unwrap().parse().unwrap();
    assert!((v - 0.75).abs() < 1e-14, "{v}");
    assert!(lines[2].split(',').nth(2) == Some("inf"));
}

#[test]
fn eval_power_without_q_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let points = write(dir.path(), "pts.csv", "r,t\n1.0,1.0\n");
    let out = supercal(&["eval", "--family", "power", "--n", "2", "--p", "1.5", "--points", &points]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "solve.json", SOLVE);
    let first = supercal(&["solve", "--config", &cfg]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let table = fs::read(dir.path().join("u.csv")).unwrap();
    let sidecar = fs::read(dir.path().join("u.json")).unwrap();
    let second = supercal(&["solve", "--config", &cfg]);
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(table, fs::read(dir.path().join("u.csv")).unwrap());
    assert_eq!(sidecar, fs::read(dir.path().join("u.json")).unwrap());

    let report: Value = serde_json::from_slice(&first.stdout).unwrap();
    assert!(report["max_error"].as_f64().unwrap() < 5e-3);
    assert_eq!(report["residual_classes"]["subsolution"].as_f64(), Some(0.0));

    let field = dir.path().join("u.csv");
    let v = json_ok(&["classify", "--field", field.to_str().unwrap()]);
    assert_eq!(v["verdict"], "ClassB");
}

#[test]
fn picard_cap_is_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let body = SOLVE.replace(r#""output": "u.csv""#, r#""solver": {"picard_max": 1}"#);
    let cfg = write(dir.path(), "solve.json", &body);
    let out = supercal(&["solve", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Picard"));
}

#[test]
fn unknown_config_field_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let body = SOLVE.replace(r#""data""#, r#""dtaa""#);
    let cfg = write(dir.path(), "solve.json", &body);
    assert_eq!(supercal(&["solve", "--config", &cfg]).status.code(), Some(2));
    assert_eq!(supercal(&["solve", "--config", "/nonexistent.json"]).status.code(), Some(2));
}

#[test]
fn obstacle_bump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "obstacle.json",
        r#"{
            "medium": {"n": 2, "p": 1.5},
            "grid": {"r_max": 1, "intervals": 16},
            "times": {"t0": 0, "t1": 0.1, "steps": 4},
            "obstacle": {"kind": "bump", "height": 1, "width": 0.5},
            "output": "w.csv",
            "contact_output": "contact.csv"
        }"#,
    );
    let v = json_ok(&["obstacle", "--config", &cfg]);
    assert!(v["complementarity_residual"].as_f64().unwrap() < 1e-3);
    assert!(v["contact_fraction"].as_f64().unwrap() > 0.0);
    assert!(dir.path().join("w.json").exists());
    assert!(fs::read_to_string(dir.path().join("contact.csv")).unwrap().lines().count() > 1);
}

#[test]
fn scan_point_source_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "scan.json",
        r#"{
            "medium": {"n": 2, "p": 1.5},
            "source": {"family": "ips"},
            "cylinder": {"x0_radius": 0, "r": 1, "t1": 0, "t2": 1},
            "selector": "value",
            "q": [0.5, 0.8],
            "q_range": [0.2, 1.2],
            "output": "scan.csv"
        }"#,
    );
    let v = json_ok(&["scan", "--config", &cfg]);
    assert_eq!(v["scans"][0]["verdict"], "Convergent");
    assert_eq!(v["scans"][1]["verdict"], "Divergent");
    let q_star = v["threshold"]["q_star"].as_f64().unwrap();
    assert!((q_star - 2.0 / 3.0).abs() < 0.02, "{q_star}");
    let csv = fs::read_to_string(dir.path().join("scan.csv")).unwrap();
    assert!(csv.starts_with("q,rho,I,verdict"));
}

#[test]
fn harnack_sweep_and_rate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "harnack.json",
        r#"{
            "medium": {"n": 2, "p": 1.5},
            "source": {"family": "sbb"},
            "probes": [{"x0_radius": 0, "r": 0.25, "s": 1}],
            "sweep": {"x0": 0, "r0": 0.25, "s0": 1, "scales": [0.5, 1, 2], "output": "sweep.csv"},
            "l1": [{"x0": 0, "r": 0.5, "s": 0.5, "t": 1}],
            "rate": {"x0": 0, "t0": 0, "s": 1, "r0": 0.5}
        }"#,
    );
    let v = json_ok(&["harnack", "--config", &cfg]);
    assert!((v["sweep"]["max_over_min"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(v["rate"]["verdict"], "ZeroRate");
    assert!(v["weak"][0]["admissible_c1"].as_f64().unwrap() > 0.0);
    assert!(v["l1"][0]["admissible_c"].as_f64().unwrap() > 0.0);
    let sweep = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 4);
}

#[test]
fn harnack_l1_refuses_supersolutions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "harnack.json",
        r#"{
            "medium": {"n": 2, "p": 1.5},
            "source": {"family": "power", "q": 2},
            "l1": [{"x0": 0.5, "r": 0.1, "s": 0.5, "t": 1}]
        }"#,
    );
    assert_eq!(supercal(&["harnack", "--config", &cfg]).status.code(), Some(2));
}

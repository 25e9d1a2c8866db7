use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn hypflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypflow")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn gen_writes_a_valid_document() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tri.json");
    let out = hypflow(&["gen", "--tiling", "tri", "--radius", "2", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(doc["vertices"].as_array().unwrap().len(), 19);
    assert_eq!(doc["base"], 0);
}

#[test]
fn flow_on_square_grid_converges() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let args = ["flow", "--tiling", "square", "--radius", "10", "--that", "4", "--s0", "0", "--out"];
    let out = hypflow(&[&args[..], &[trace.to_str().unwrap()]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(summary["converged"], true);
    assert!(summary["violations"].as_array().unwrap().is_empty());
    let csv = fs::read_to_string(&trace).unwrap();
    assert!(csv.starts_with("t,sup_residual,m,M,m_star,M_star,s_0\n"));

    let again = dir.path().join("again.csv");
    let out = hypflow(&[&args[..], &[again.to_str().unwrap()]].concat());
    assert!(out.status.success());
    assert_eq!(fs::read(&trace).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn flow_from_complex_file_with_per_vertex_values() {
    let dir = tempfile::tempdir().unwrap();
    let complex = dir.path().join("sq.json");
    assert!(hypflow(&["gen", "--tiling", "square", "--radius", "2", "--out", complex.to_str().unwrap()])
        .status
        .success());
    let that = dir.path().join("that.csv");
    let values: String = (0..25).map(|v| format!("{v},5\n")).collect();
    fs::write(&that, format!("vertex,that\n{values}")).unwrap();
    let out = hypflow(&[
        "steady",
        "--complex",
        complex.to_str().unwrap(),
        "--that",
        &format!("file:{}", that.display()),
        "--s0",
        "0",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = stdout(&out);
    assert!(csv.starts_with("vertex_id,k,s,T,T_hat,residual\n"));
    assert_eq!(csv.lines().count(), 1 + 9);
}

#[test]
fn realize_draws_the_horocycle_triangle() {
    let out = hypflow(&["realize", "--face", "1,1,1"]);
    assert!(out.status.success());
    let svg = stdout(&out);
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    let info: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!((info["dual_curvature"].as_f64().unwrap() - 2.0).abs() < 1e-10);
}

#[test]
fn check_theorem_one_on_triangulation() {
    let out = hypflow(&["check", "--theorem", "1", "--tiling", "tri", "--radius", "8", "--that", "deg", "--s0", "0"]);
    assert!(out.status.success());
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["verdict"], "True");
    assert_eq!(report["witness"], Value::Null);
}

#[test]
fn check_simple_and_theorem_two() {
    let out = hypflow(&["check", "--theorem", "simple", "--tiling", "hex", "--radius", "8"]);
    assert!(out.status.success());
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["verdict"], "TrueUpToCap");

    let out = hypflow(&["check", "--theorem", "2", "--tiling", "square", "--radius", "4", "--that", "4", "--cap", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_ne!(report["verdict"], "True");
}

#[test]
fn sweep_reports_deltas() {
    let out = hypflow(&["sweep", "--tiling", "square", "--radii", "3,5,7", "--that", "4", "--probes", "0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["deltas"].as_array().unwrap().len(), 2);
    assert_eq!(report["decreasing"], true);
}

#[test]
fn errors_are_json_and_nonzero() {
    let out = hypflow(&["gen", "--tiling", "penrose", "--radius", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("penrose"));

    let out = hypflow(&["flow", "--tiling", "square", "--radius", "2", "--that", "4", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "usage");

    let out = hypflow(&["flow", "--tiling", "square", "--that", "4"]);
    assert!(!out.status.success());
}

#[test]
fn help_lists_flags() {
    let out = hypflow(&["flow", "--help"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for flag in ["--complex", "--tiling", "--radius", "--that", "--s0", "--tol", "--out"] {
        assert!(text.contains(flag), "{flag}");
    }
}

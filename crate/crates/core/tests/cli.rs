//! The `holonomy` binary: exit codes, output files and reproducibility.

use std::path::PathBuf;
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn holonomy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_holonomy")).args(args).output().expect("binary runs")
}

fn path_str(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn passing_scenario_exits_zero_with_a_json_report() {
    let s = scenario("u1_path.json");
    let out = holonomy(&["path", path_str(&s)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["command"], "path");
    assert!(report["records"].as_array().unwrap().len() >= 3);
}

#[test]
fn failed_check_exits_one() {
    let out = holonomy(&["validate", path_str(&scenario("validate_torus.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL crossed-module axiom: equivariance"));
    let out = holonomy(&["validate", path_str(&scenario("not_fake_flat.json"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn schema_errors_exit_two_with_byte_offset() {
    let s = scenario("malformed.json");
    let out = holonomy(&["path", path_str(&s)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("schema error at byte"), "{err}");
    let text = std::fs::read_to_string(&s).unwrap();
    let offset: usize = err.split("at byte ").nth(1).unwrap().split(':').next().unwrap().parse().unwrap();
    assert!(text[..offset].ends_with("\"leveles"), "{}", &text[..offset]);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(holonomy(&["nonsense"]).status.code(), Some(2));
    assert_eq!(holonomy(&["path"]).status.code(), Some(2));
    assert_eq!(holonomy(&["path", "/no/such/file.json"]).status.code(), Some(2));
    // surface needs a kite
    assert_eq!(holonomy(&["surface", path_str(&scenario("u1_path.json"))]).status.code(), Some(2));
    // wz needs the abelian module
    assert_eq!(holonomy(&["wz", path_str(&scenario("box_su2.json"))]).status.code(), Some(2));
}

#[test]
fn out_and_csv_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let csv = dir.path().join("tables");
    let st = holonomy(&[
        "converge",
        path_str(&scenario("su2_path.json")),
        "--out",
        out.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
        "--levels",
        "5",
    ]);
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(st.stdout.is_empty());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["tables"][0]["rows"].as_array().unwrap().len(), 6);
    let table = std::fs::read_to_string(csv.join("path.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "k,value_0,value_1,value_2,diff,observed_order");
    assert_eq!(lines.count(), 6);
}

#[test]
fn deterministic_runs_are_byte_identical_and_untimed() {
    let s = scenario("boundary_su2.json");
    let a = holonomy(&["stokes2", path_str(&s), "--deterministic", "--seed", "3"]);
    let b = holonomy(&["stokes2", path_str(&s), "--deterministic", "--seed", "3", "--jobs", "4"]);
    assert_eq!(a.stdout, b.stdout);
    assert!(!String::from_utf8_lossy(&a.stdout).contains("wall_clock_seconds"));
}

#[test]
fn timed_runs_report_wall_clock() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.json");
    let text = std::fs::read_to_string(scenario("u1_path.json")).unwrap().replace("\"deterministic\": true", "\"deterministic\": false");
    std::fs::write(&p, text).unwrap();
    let out = holonomy(&["path", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("wall_clock_seconds"));
}

#[test]
fn every_shipped_scenario_parses() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let name = p.file_name().unwrap().to_string_lossy().to_string();
        let r = surface_holonomy::cli::load_scenario(&p, "validate");
        assert_eq!(r.is_err(), name == "malformed.json", "{name}: {:?}", r.err());
    }
}

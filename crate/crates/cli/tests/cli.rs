//! Integration tests for file ingestion and the command-line surface.

use std::path::{Path, PathBuf};
use std::process::Command;

use borrowlab::io;
use tempfile::TempDir;

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_borrowlab"))
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

#[test]
fn loads_nsw_format_trial() {
    let (trial, names) =
        io::load_trial_csv(&data_dir().join("nsw_format_trial.csv"), "re78", "treat").unwrap();
    assert_eq!(trial.d(), 8);
    assert_eq!(trial.len(), 445);
    assert_eq!(trial.n_treated(), 185);
    assert_eq!(
        names,
        [
            "age",
            "education",
            "black",
            "hispanic",
            "married",
            "nodegree",
            "re74",
            "re75"
        ]
    );
}

#[test]
fn loads_psid_format_pool() {
    let (pool, _) = io::load_pool_csv(
        &data_dir().join("psid_format_pool.csv"),
        "re78",
        Some("treat"),
    )
    .unwrap();
    assert_eq!(pool.len(), 123);
    assert_eq!(pool.d(), 8);
}

#[test]
fn rejects_non_binary_treat_with_row() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("bad.csv");
    write(&p, "treat,x,y\n0,1.0,2.0\n2,1.5,2.5\n");
    let err = io::load_trial_csv(&p, "y", "treat").unwrap_err();
    assert_eq!(err.code, "non-binary-treat");
    assert!(err.message.contains("row 2"), "{}", err.message);
}

#[test]
fn rejects_missing_column() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("bad.csv");
    write(&p, "treat,x,y\n0,1.0,2.0\n");
    let err = io::load_trial_csv(&p, "outcome", "treat").unwrap_err();
    assert_eq!(err.code, "schema");
}

#[test]
fn rejects_empty_file() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("empty.csv");
    write(&p, "treat,x,y\n");
    let err = io::load_trial_csv(&p, "y", "treat").unwrap_err();
    assert_eq!(err.code, "empty");
    assert!(err.message.contains("no rows"));
}

#[test]
fn rejects_missing_cell_with_coordinates() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("holes.csv");
    write(&p, "treat,x,y\n1,1.0,2.0\n0,,2.5\n");
    let err = io::load_trial_csv(&p, "y", "treat").unwrap_err();
    assert_eq!(err.code, "missing-cell");
    assert!(err.message.contains("row 2"));
    assert!(err.message.contains("column x"));
}

#[test]
fn rejects_non_numeric_cell() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("text.csv");
    write(&p, "treat,x,y\n1,abc,2.0\n0,1.0,2.5\n");
    let err = io::load_trial_csv(&p, "y", "treat").unwrap_err();
    assert_eq!(err.code, "non-numeric");
}

#[test]
fn rejects_treated_pool_row() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("pool.csv");
    write(&p, "treat,x,y\n0,1.0,2.0\n1,1.5,2.5\n");
    let err = io::load_pool_csv(&p, "y", Some("treat")).unwrap_err();
    assert_eq!(err.code, "treated-external");
    assert!(err.message.contains("row 2"));
}

#[test]
fn pool_without_treat_column_is_fine() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("pool.csv");
    write(&p, "x,y\n1.0,2.0\n1.5,2.5\n");
    let (pool, names) = io::load_pool_csv(&p, "y", Some("treat")).unwrap();
    assert_eq!(pool.len(), 2);
    assert_eq!(names, ["x"]);
}

#[test]
fn schema_mismatch_lists_both_headers() {
    let err = io::check_schema(&["a".into(), "b".into()], &["b".into(), "a".into()]).unwrap_err();
    assert_eq!(err.code, "schema-mismatch");
    assert!(err.message.contains("trial") && err.message.contains("pool"));
}

#[test]
fn simulate_then_load_roundtrips_bitwise() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sim");
    let status = bin()
        .args(["simulate", "--scenario", "linear", "--seed", "3"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let (trial, _) = io::load_trial_csv(&out.join("trial.csv"), "y", "treat").unwrap();
    let (pool, _) = io::load_pool_csv(&out.join("pool.csv"), "y", None).unwrap();
    let cfg = borrowlab_core::simgen::ScenarioConfig::<f64>::linear(3);
    let (trial0, pool0) = borrowlab_core::simgen::gen_linear(&cfg).unwrap();
    assert_eq!(trial.samples(), trial0.samples());
    assert_eq!(pool.samples(), pool0.samples());
}

#[test]
fn estimate_emits_report_json() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("report.json");
    let status = bin()
        .args([
            "estimate",
            "--scenario",
            "linear",
            "--seed",
            "5",
            "--method",
            "aipw",
        ])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(json["tau_hat"].is_number());
    assert!(json["se_hat"].is_number());
    assert_eq!(json["method"], "aipw");
}

#[test]
fn borrow_writes_ranking_profile_and_selection() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("borrow");
    let status = bin()
        .args(["borrow", "--scenario", "oneD", "--seed", "0"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let ranking: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("ranking.json")).unwrap()).unwrap();
    assert_eq!(ranking.as_array().unwrap().len(), 800);
    let profile = std::fs::read_to_string(out.join("profile.csv")).unwrap();
    assert!(profile.starts_with("k,tau,bias,var,mse\n"));
    let selected: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("selected.json")).unwrap()).unwrap();
    assert!(selected["k_star"].as_u64().unwrap() > 0);
}

#[test]
fn benchmark_is_deterministic_across_runs() {
    let dir = TempDir::new().unwrap();
    let out1 = dir.path().join("t1.csv");
    let out2 = dir.path().join("t2.csv");
    for out in [&out1, &out2] {
        let status = bin()
            .args([
                "benchmark",
                "--scenario",
                "linear",
                "--reps",
                "4",
                "--seed",
                "7",
                "--method",
                "aipw",
                "--topk",
                "10",
            ])
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(
        std::fs::read_to_string(&out1).unwrap(),
        std::fs::read_to_string(&out2).unwrap()
    );
}

#[test]
fn errors_emit_machine_readable_record() {
    let output = bin()
        .args(["estimate", "--rct", "/nonexistent/file.csv"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    let record: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(record["code"], "io");
    assert!(record["message"].is_string());
    assert!(record["locus"].is_string());
}

#[test]
fn conflicting_sources_rejected() {
    let output = bin()
        .args(["estimate", "--scenario", "linear", "--rct", "x.csv"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let record: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&output.stderr).trim()).unwrap();
    assert_eq!(record["code"], "config");
}

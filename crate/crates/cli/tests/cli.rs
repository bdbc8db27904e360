use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn lago(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lago"))
        .args(args)
        .env_remove("LAGO_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn fit_reads_the_betterbirth_trial() {
    let csv = fixtures().join("betterbirth/trial.csv");
    let v = stdout_json(&lago(&["--quiet", "fit", "--csv", csv.to_str().unwrap(), "--link", "logit"]));
    assert_eq!(v["stages"], 3);
    assert_eq!(v["stage_sizes"], serde_json::json!([113, 2143, 5086]));
    assert_eq!(v["n_total"], 7342);
    assert_eq!(v["fit"]["converged"], true);
    assert_eq!(v["coefficients"].as_array().unwrap().len(), 4);
}

#[test]
fn linear_recommendation_from_config() {
    let cfg = fixtures().join("betterbirth/recommend_linear.toml");
    let v = stdout_json(&lago(&["--quiet", "run", cfg.to_str().unwrap()]));
    let rec = &v["recommendation"];
    assert_eq!(rec["package"], serde_json::json!([5.0, 31.0]));
    assert!((rec["cost"].as_f64().unwrap() - 9270.0).abs() < 1e-9);
    assert_eq!(rec["feasible"], true);
}

#[test]
fn flags_match_the_config_run() {
    let fit = fixtures().join("betterbirth/fit.json");
    let v = stdout_json(&lago(&[
        "--quiet",
        "recommend",
        "--fit",
        fit.to_str().unwrap(),
        "--cost",
        "linear:800,170",
        "--theta",
        "0.8",
        "--bounds",
        "1:5,1:40",
        "--z",
        "1.75",
        "--increment",
        "1",
        "--grid",
    ]));
    assert_eq!(v["recommendation"]["package"], serde_json::json!([5.0, 31.0]));
}

#[test]
fn simulation_reruns_are_byte_identical() {
    let cfg = fixtures().join("sim1_small.toml");
    let a = lago(&["--quiet", "run", cfg.to_str().unwrap()]);
    let b = lago(&["--quiet", "run", cfg.to_str().unwrap()]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let one = Command::new(env!("CARGO_BIN_EXE_lago"))
        .args(["--quiet", "run", cfg.to_str().unwrap()])
        .env("LAGO_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(a.stdout, one.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["replications"], 20);
}

#[test]
fn missing_bounds_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(
        &cfg,
        "command = \"recommend\"\n[recommend]\nfit = \"fit.json\"\ntheta = 0.8\ncost = { kind = \"linear\", unit_costs = [1, 2] }\n",
    )
    .unwrap();
    let out = lago(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bounds"), "{err}");
}

#[test]
fn malformed_csv_cites_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    std::fs::write(&csv, "stage,center_id,arm,y,a_1\n1,c1,intervention,0.5,1\n1,c1,intervention,oops,1\n").unwrap();
    let out = lago(&["fit", "--csv", csv.to_str().unwrap(), "--link", "identity"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("`y`"), "{err}");
}

#[test]
fn output_dir_receives_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixtures().join("betterbirth/confset.toml");
    let out = lago(&["--quiet", "--out", dir.path().to_str().unwrap(), "run", cfg.to_str().unwrap()]);
    let v = stdout_json(&out);
    let on_disk: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("confset.json")).unwrap()).unwrap();
    assert_eq!(v, on_disk);
    let csv = std::fs::read_to_string(dir.path().join("confset.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("a_1,a_2"));
    assert_eq!(csv.lines().count(), 1 + v["members"].as_array().unwrap().len());
    assert!(v["bands"]["entries"].as_array().unwrap().len() == 5 * 40);
}

#[test]
fn unknown_preset_is_a_usage_error() {
    let out = lago(&["simulate", "--preset", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sim1-linear"));
}

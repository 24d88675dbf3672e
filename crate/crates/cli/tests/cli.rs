use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn cohold(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cohold")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn design_bundled_config_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("design.json");
    let o = cohold(&["design", "--config", s(&fixture("unicycle_config.json")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let d = json(&out);
    assert!(d["delta_used"].as_f64().unwrap() <= 10.0);
    assert!((d["cc_trace"].as_f64().unwrap() - 6.0).abs() < 1e-3);
    assert!(!d["log"].as_array().unwrap().is_empty());
    let v = cohold(&["verify", "--design", s(&out)]);
    assert_eq!(v.status.code(), Some(0));
}

#[test]
fn design_missing_field_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = cohold(&["design", "--config", s(&fixture("missing_bp_config.json")), "--out", s(&dir.path().join("x.json"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("B_p"));
}

#[test]
fn design_unstabilizable_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.json");
    let o = cohold(&["design", "--config", s(&fixture("unstabilizable_config.json")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&out)["status"], "infeasible");
}

fn verify_report(name: &str, rel_tol: &str) -> (Option<i32>, Value) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = cohold(&["verify", "--design", s(&fixture(name)), "--rel-tol", rel_tol, "--out", s(&out)]);
    (o.status.code(), json(&out))
}

fn failed_checks(report: &Value) -> Vec<String> {
    report["checks"].as_array().unwrap().iter().filter(|c| c["pass"] == false).map(|c| c["name"].as_str().unwrap().to_string()).collect()
}

#[test]
fn verify_published_fixture_passes_with_rounding_slack() {
    let (code, r) = verify_report("published_design.json", "5e-2");
    assert_eq!(code, Some(0));
    assert_eq!(r["passed"], true);
}

#[test]
fn verify_zeroed_p1_fails_positivity() {
    let (code, r) = verify_report("published_design_zero_p1.json", "5e-2");
    assert_eq!(code, Some(2));
    assert!(failed_checks(&r).contains(&"P1 > 0".to_string()));
}

#[test]
fn verify_perturbed_gamma_fails_budget_only() {
    let (code, r) = verify_report("published_design_over_budget.json", "5e-2");
    assert_eq!(code, Some(2));
    assert_eq!(failed_checks(&r), vec!["gamma1 + gamma2 <= gamma^2".to_string()]);
}

#[test]
fn verify_rejects_negative_tolerance() {
    let o = cohold(&["verify", "--design", s(&fixture("published_design.json")), "--rel-tol", "-1"]);
    assert_eq!(o.status.code(), Some(3));
}

fn simulate(extra: &[&str]) -> (String, Value) {
    let dir = tempfile::tempdir().unwrap();
    let (csv, summary) = (dir.path().join("t.csv"), dir.path().join("s.json"));
    let design = fixture("unicycle_design.json");
    let mut args = vec!["simulate", "--design", s(&design), "--out", s(&csv), "--summary", s(&summary)];
    args.extend_from_slice(extra);
    let o = cohold(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    (std::fs::read_to_string(csv).unwrap(), json(&summary))
}

#[test]
fn simulate_reference_transient_decays() {
    let sc = fixture("fig1_scenario.json");
    let (_, sum) = simulate(&["--config", s(&sc)]);
    assert_eq!(sum["diverged"], false);
    assert!(sum["decay"]["lambda"].as_f64().unwrap() > 0.0);
    assert!(sum["final_distance"].as_f64().unwrap() < 1e-3 * sum["initial_distance"].as_f64().unwrap());
}

#[test]
fn simulate_zoh_override_diverges() {
    let sc = fixture("fig1_scenario.json");
    let (_, sum) = simulate(&["--config", s(&sc), "--zoh"]);
    assert_eq!(sum["zoh"], true);
    assert_eq!(sum["diverged"], true);
    assert!(sum["decay"]["lambda"].as_f64().unwrap() < 0.0);
}

#[test]
fn simulate_zero_state_gives_zero_outputs() {
    let (csv, sum) = simulate(&[]);
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    for line in csv.lines().skip(1) {
        for (name, v) in header.iter().zip(line.split(',')) {
            if !matches!(*name, "t" | "j" | "tau") {
                assert_eq!(v.parse::<f64>().unwrap(), 0.0, "{name}");
            }
        }
    }
    assert_eq!(sum["max_distance"], 0.0);
}

#[test]
fn simulate_is_deterministic_given_seed() {
    let sc = fixture("pulse_scenario.json");
    let args = ["--config", s(&sc), "--policy", "random", "--seed", "42"];
    let (a, _) = simulate(&args);
    let (b, _) = simulate(&args);
    assert_eq!(a, b);
    let (c, _) = simulate(&["--config", s(&sc), "--policy", "random", "--seed", "43"]);
    assert_ne!(a, c);
}

#[test]
fn simulate_bad_scenario_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("bad.json");
    std::fs::write(&sc, r#"{"x_p0": [1.0, 2.0], "t_end": 1.0}"#).unwrap();
    let o = cohold(&["simulate", "--design", s(&fixture("unicycle_design.json")), "--config", s(&sc), "--out", s(&dir.path().join("t.csv"))]);
    assert_eq!(o.status.code(), Some(3));
    std::fs::write(&sc, r#"{"horizon": 1.0}"#).unwrap();
    let o = cohold(&["simulate", "--design", s(&fixture("unicycle_design.json")), "--config", s(&sc), "--out", s(&dir.path().join("t.csv"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("horizon"));
}

#[test]
fn sweep_empty_grid_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = json(&fixture("sweep_config.json"));
    cfg["grid"] = Value::Array(vec![]);
    let p = dir.path().join("sweep.json");
    std::fs::write(&p, cfg.to_string()).unwrap();
    let o = cohold(&["sweep", "--config", s(&p), "--out", s(&dir.path().join("t.csv"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn sweep_single_point_matches_design() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = json(&fixture("sweep_config.json"));
    cfg["grid"] = serde_json::json!([1.0]);
    let p = dir.path().join("sweep.json");
    std::fs::write(&p, cfg.to_string()).unwrap();
    let out = dir.path().join("t.csv");
    let o = cohold(&["sweep", "--config", s(&p), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let table = std::fs::read_to_string(out).unwrap();
    let row: Vec<&str> = table.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "true");
    let design = json(&fixture("unicycle_design.json"));
    assert_eq!(row[2].parse::<f64>().unwrap(), design["delta_used"].as_f64().unwrap());
}

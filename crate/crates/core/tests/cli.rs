use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn pollsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pollsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn config(mu: f64, rho: [f64; 2], alpha_c: [f64; 2], cycles: u64) -> Value {
    json!({
        "rates": {"mu": mu, "rho1": rho[0], "rho2": rho[1]},
        "service": {"dist": "exponential"},
        "switchover": [{"dist": "deterministic", "mean": 1.0}, {"dist": "deterministic", "mean": 1.0}],
        "policy": {"alphaB": [0, 0], "betaB": [0, 0], "alphaC": alpha_c, "betaC": [0, 0]},
        "horizon": {"cycles": cycles},
        "seed": 12
    })
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn simulate_emits_palm_and_time_averages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &config(10.0, [0.3, 0.3], [0.0, 0.0], 50));
    let trace = dir.path().join("trace.csv");
    let v = stdout_json(&pollsim(&["simulate", "--config", cfg.to_str().unwrap(), "--trace", trace.to_str().unwrap()]));
    assert_eq!(v["palm"].as_array().unwrap().len(), 50);
    assert_eq!(v["time_avg_n"].as_array().unwrap().len(), 2);
    assert_eq!(v["config"]["service"]["mean"], json!(0.1));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("t,event_kind,n1,n2,phase\n"));
    assert!(text.lines().count() > 50);
}

#[test]
fn simulate_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &config(10.0, [0.3, 0.3], [0.0, -0.5], 200));
    let (a, b, c) = (dir.path().join("a.json"), dir.path().join("b.json"), dir.path().join("c_out.json"));
    for (out, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let o = pollsim(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        assert!(o.stdout.is_empty());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn positive_coefficient_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = config(10.0, [0.3, 0.3], [0.0, 0.0], 10);
    v["policy"]["betaB"] = json!([1.0, 0.0]);
    let cfg = write_config(dir.path(), "c.json", &v);
    let o = pollsim(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(err["errors"][0].as_str().unwrap().contains("betaB[1]"), "{err}");
}

#[test]
fn missing_file_and_bad_schema_exit_two() {
    assert_eq!(pollsim(&["analyze", "--config", "/nonexistent/x.json"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let mut v = config(10.0, [0.3, 0.3], [0.0, 0.0], 10);
    v["extra"] = json!(1);
    let cfg = write_config(dir.path(), "c.json", &v);
    assert_eq!(pollsim(&["analyze", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn analyze_reports_fixed_point_and_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.json", &config(20.0, [0.3, 0.3], [0.0, 0.0], 10));
    let v = stdout_json(&pollsim(&["analyze", "--config", cfg.to_str().unwrap()]));
    let t = v["theta_star"].as_array().unwrap();
    assert!((t[0].as_f64().unwrap() - 1.05).abs() < 1e-12);
    assert!((t[1].as_f64().unwrap() - 0.30).abs() < 1e-12);
    assert!((v["psi_star"].as_f64().unwrap() - 5.0).abs() < 1e-12);
    assert_eq!(v["stable"], json!(true));
    assert_eq!(v["config"]["rates"]["mu"], json!(20.0));

    let heavy = write_config(dir.path(), "h.json", &config(20.0, [0.5, 0.55], [0.0, 0.0], 10));
    let v = stdout_json(&pollsim(&["analyze", "--config", heavy.to_str().unwrap()]));
    assert_eq!(v["stable"], json!(false));
    assert!(v["reasons"].as_array().unwrap().contains(&json!("load")));

    let prod = write_config(dir.path(), "p.json", &config(20.0, [0.3, 0.3], [-2.0, -0.6], 10));
    let v = stdout_json(&pollsim(&["analyze", "--config", prod.to_str().unwrap()]));
    assert_eq!(v["stable"], json!(false));
    assert!(v["reasons"].as_array().unwrap().contains(&json!("alphaC-product")));
}

fn total_gap(v: &Value) -> f64 {
    (0..2).map(|i| v["comparison"]["queues"][i]["gap"].as_f64().unwrap()).sum()
}

#[test]
fn validate_passes_and_gap_shrinks_with_mu() {
    let dir = tempfile::tempdir().unwrap();
    let ex = write_config(dir.path(), "ex.json", &config(20.0, [0.3, 0.3], [0.0, 0.0], 100));
    let v = stdout_json(&pollsim(&["validate", "--config", ex.to_str().unwrap(), "--cycles", "20000"]));
    assert_eq!(v["pass"], json!(true), "{v}");
    assert_eq!(v["cycles"], json!(20000));
    assert!(v["drift_at_theta_star"].as_f64().unwrap().abs() < 1e-9);

    let small = write_config(dir.path(), "m5.json", &config(5.0, [0.3, 0.3], [0.0, -0.5], 60_000));
    let big = write_config(dir.path(), "m80.json", &config(80.0, [0.3, 0.3], [0.0, -0.5], 60_000));
    let g5 = total_gap(&stdout_json(&pollsim(&["validate", "--config", small.to_str().unwrap()])));
    let g80 = total_gap(&stdout_json(&pollsim(&["validate", "--config", big.to_str().unwrap()])));
    assert!(g80 < g5, "mu=5 gap {g5}, mu=80 gap {g80}");
}

#[test]
fn validate_rejects_unstable_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "u.json", &config(20.0, [0.6, 0.5], [0.0, 0.0], 10));
    let o = pollsim(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("load"));
}

#[test]
fn sweep_row_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", &config(10.0, [0.3, 0.3], [0.0, 0.0], 600));
    let csv = dir.path().join("front.csv");
    let summary = dir.path().join("summary.json");
    let o = pollsim(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--samples", "0", "--alpha-grid", "-0.5,-1",
        "--replications", "1", "--one-side", "--out", csv.to_str().unwrap(), "--summary", summary.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.ends_with("Ps-frontier")));
    let s: Value = serde_json::from_slice(&std::fs::read(&summary).unwrap()).unwrap();
    assert!(!s["frontier"].as_array().unwrap().is_empty());

    let o = pollsim(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--samples", "3", "--alpha-grid", "-0.5,-1",
        "--replications", "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 + 4);
    assert_eq!(text.lines().filter(|l| l.ends_with("random-Ts")).count(), 3);
}

#[test]
fn sweep_rejects_positive_grid_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", &config(10.0, [0.3, 0.3], [0.0, 0.0], 100));
    let o = pollsim(&["sweep", "--config", cfg.to_str().unwrap(), "--samples", "0", "--alpha-grid", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_needs_exponential_times() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "o.json", &config(4.0, [0.3, 0.2], [0.0, 0.0], 10));
    let o = pollsim(&["oracle", "--config", cfg.to_str().unwrap(), "--buffer-cap", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("oracle requires exponential"));

    let mut v = config(4.0, [0.3, 0.2], [0.0, 0.0], 10);
    v["switchover"] = json!([{"dist": "exponential", "mean": 0.5}, {"dist": "exponential", "mean": 0.5}]);
    let cfg = write_config(dir.path(), "e.json", &v);
    let out = dir.path().join("oracle.json");
    let o = pollsim(&["oracle", "--config", cfg.to_str().unwrap(), "--buffer-cap", "20", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert!(r["en1"].as_f64().unwrap() > 0.0 && r["en2"].as_f64().unwrap() > 0.0);
    assert!(r["residual"].as_f64().unwrap() < 1e-10);
    assert_eq!(r["buffer_cap"], json!(20));
    assert!(r["states"].as_u64().unwrap() <= 6 * 21 * 21);
}

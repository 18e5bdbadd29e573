use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn brm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brm"))
        .args(args)
        .env_remove("BRM_THREADS")
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = brm(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn error_of(out: &Output) -> Value {
    let v: Value = serde_json::from_slice(&out.stderr).expect("JSON error on stderr");
    v["error"].clone()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn phi_bar(x: f64) -> f64 {
    // Simpson on the density
    let n = 20_000;
    let hi = x + 40.0;
    let h = (hi - x) / n as f64;
    let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = f(x) + f(hi);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn qp_solve_identity() {
    let v = ok_json(&["qp-solve", "--preset", "identity2"]);
    assert_eq!(v["command"], "qp-solve");
    let r = &v["result"];
    assert_eq!(r["index_i"], serde_json::json!([1, 2]));
    assert!((r["value"].as_f64().unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn floats_have_seventeen_digits() {
    let out = brm(&["qp-solve", "--preset", "identity2"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("2.0000000000000000e0"), "{text}");
}

#[test]
fn sweep_matches_reflection_formula() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "job.json",
        r#"{"spec": {"sigma": [[1.0]], "a": [1.0], "c": [1.0], "k": 1},
            "n_rep": 40000, "seed": 5, "monitor": {"kind": "uniform", "n_steps": 4096}}"#,
    );
    let out = brm(&["sweep", "--config", &cfg, "--u-sweep", "1,2,3", "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("u,psi_sim,stderr,lower,upper,asym,ratio"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let (u, psi, se) = (row[0], row[1], row[2]);
        let exact = phi_bar(u + 1.0) + (-2.0 * u).exp() * phi_bar(u - 1.0);
        // uniform grid undershoots by O(sqrt(h)); allow for it on top of the noise
        assert!((psi - exact).abs() < 4.0 * se + 0.02 * exact, "u={u}: {psi} vs {exact}");
        assert!(row[3] <= psi + 4.0 * se && psi - 4.0 * se <= row[4]);
    }
}

#[test]
fn example_three_weights() {
    let v = ok_json(&["example", "--id", "3", "--d", "3", "--rho", "0.5"]);
    let lambda = v["result"]["lambda"].as_array().unwrap();
    assert_eq!(lambda.len(), 3);
    for l in lambda {
        assert!((l.as_f64().unwrap() - 0.5).abs() < 1e-12);
    }
}

#[test]
fn unknown_key_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", r#"{"spec": {"sigma": [[1.0]], "a": [1.0]}, "nrep": 10}"#);
    let out = brm(&["qp-solve", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_of(&out);
    assert_eq!(e["exit_code"], 2);
    assert!(e["message"].as_str().unwrap().contains("nrep"));
}

#[test]
fn bad_inputs_exit_two() {
    let out = brm(&["qp-solve", "--preset", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "neg.json", r#"{"spec": {"sigma": [[1.0, 2.0], [2.0, 1.0]], "a": [1.0, 1.0]}}"#);
    let out = brm(&["qp-solve", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["kind"], "InvalidCovariance");
    // clap usage errors share the code
    assert_eq!(brm(&["simulate", "--bogus"]).status.code(), Some(2));
}

#[test]
fn too_few_hits_exit_three() {
    let out = brm(&["failure-time", "--preset", "drifted1", "--u", "4", "--nrep", "300", "--steps", "1024"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(error_of(&out)["kind"], "InsufficientHits");
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = ok_json(&["simulate", "--preset", "identity2", "--nrep", "5000", "--seed", "11", "--u", "2"]);
    let cfg = write(dir.path(), "echo.json", &first["config"].to_string());
    let second = ok_json(&["simulate", "--config", &cfg]);
    assert_eq!(first, second);
}

#[test]
fn same_seed_same_bytes_any_thread_count() {
    let args = ["simulate", "--preset", "equicorr3", "--nrep", "4000", "--seed", "3"];
    let a = brm(&args).stdout;
    let mut more = vec!["--threads", "1"];
    more.extend_from_slice(&args);
    let b = brm(&more).stdout;
    let c = Command::new(env!("CARGO_BIN_EXE_brm"))
        .args(args)
        .env("BRM_THREADS", "3")
        .output()
        .unwrap()
        .stdout;
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert_eq!(a, c);
    let other = brm(&["simulate", "--preset", "equicorr3", "--nrep", "4000", "--seed", "4"]).stdout;
    assert_ne!(a, other);
}

#[test]
fn output_file_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.csv");
    let out = brm(&[
        "bound",
        "--preset",
        "identity2",
        "--nrep",
        "2000",
        "--format",
        "csv",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("lower,lower_stderr,upper,upper_stderr,k_const,k_stderr\n"));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn infinite_horizon_lograte() {
    let v = ok_json(&["approx", "--preset", "ruin1"]);
    // (u / 2) min_t (1 + t)^2 / t at u = 4
    assert!((v["result"]["log_value"].as_f64().unwrap() + 8.0).abs() < 1e-9);
}

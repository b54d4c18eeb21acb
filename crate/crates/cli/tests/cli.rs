use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn su2qec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_su2qec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("valid JSON on stdout")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn qfi_report_example() {
    let v = json_of(&su2qec(&[
        "qfi",
        "--s",
        "1/2",
        "--n",
        "6",
        "--m",
        "2",
        "--d",
        "1",
        "--explicit",
        "--bound",
    ]));
    let qfi = v["qfi"].as_f64().unwrap();
    assert!((qfi - 80.0 / 9.0).abs() < 1e-12);
    assert!((v["qfi_explicit"].as_f64().unwrap() - qfi).abs() < 1e-10);
    assert!((v["overlap_a"].as_f64().unwrap() - 5f64.sqrt() / 3.0).abs() < 1e-12);
    assert_eq!(v["loss_bound"]["holds"], Value::Bool(true));
}

#[test]
fn cg_and_fidelity() {
    let v = json_of(&su2qec(&[
        "cg", "--j", "3", "--m", "2", "--j1", "1/2", "--m1", "1/2",
    ]));
    assert!((v["value"].as_f64().unwrap() - (5.0f64 / 6.0).sqrt()).abs() < 1e-14);
    let v = json_of(&su2qec(&[
        "fidelity",
        "--n",
        "2",
        "--m",
        "1",
        "--d",
        "1",
        "--explicit",
    ]));
    assert!((v["fidelity"].as_f64().unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    assert!(
        (v["fidelity_explicit"].as_f64().unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12
    );
}

#[test]
fn channel_metadata_is_echoed() {
    let args = [
        "kl-check",
        "--n",
        "6",
        "--m-min",
        "-3",
        "--delta",
        "2",
        "--count",
        "3",
        "--sites",
        "0,1",
        "--n-kraus",
        "9",
        "--seed",
        "42",
    ];
    let v = json_of(&su2qec(&args));
    assert_eq!(v["channel_meta"]["seed"], 42);
    assert_eq!(v["channel_meta"]["n_d"], 9);
    assert_eq!(v["channel_meta"]["site_sets"], serde_json::json!([[0, 1]]));
    assert!(
        v["offdiag_residual"].as_f64().unwrap() > 1e-6,
        "Δ = 2 < 2sd + 1 = 3 leaves residuals"
    );
    let csv = su2qec(&[&args[..], &["--format", "csv"]].concat());
    assert!(csv.status.success());
    assert!(String::from_utf8_lossy(&csv.stdout).starts_with("channel_meta,code,diag_checks"));
    let v = json_of(&su2qec(&[
        "inaccuracy",
        "--n",
        "6",
        "--m-min",
        "-3",
        "--delta",
        "3",
        "--count",
        "3",
        "--sites",
        "2",
        "--seed",
        "7",
    ]));
    assert_eq!(v["channel_meta"]["seed"], 7);
    assert!(v["epsilon_hat"].as_f64().unwrap() >= 0.0);
}

#[test]
fn measure_reports() {
    let v = json_of(&su2qec(&[
        "measure", "--n", "6", "--m", "2", "--scheme", "local_D", "--nu", "10000", "--seed", "3",
    ]));
    assert!((v["delta_theta"].as_f64().unwrap() - 1.0 / 400.0).abs() < 1e-12);
    assert_eq!(v["mc_reps"], 256);
    let v = json_of(&su2qec(&[
        "measure",
        "--n",
        "12",
        "--m",
        "4",
        "--d",
        "1",
        "--scheme",
        "local_Dbar",
        "--theta",
        "0.1",
    ]));
    assert_eq!(v["discarded_extra"], Value::Bool(true));
    assert_eq!(v["d_used"], 2);
}

#[test]
fn exit_codes() {
    assert_eq!(su2qec(&["bogus"]).status.code(), Some(1));
    assert_eq!(su2qec(&["qfi", "--n", "6"]).status.code(), Some(1));
    assert_eq!(su2qec(&["--help"]).status.code(), Some(0));
    // domain: M ≤ j1
    assert_eq!(
        su2qec(&["qfi", "--n", "6", "--m", "1", "--d", "2"])
            .status
            .code(),
        Some(1)
    );
    // singular estimator
    let out = su2qec(&[
        "measure",
        "--n",
        "6",
        "--m",
        "2",
        "--d",
        "1",
        "--scheme",
        "global_Dprime",
        "--theta",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    // 2^30 amplitudes
    let out = su2qec(&["qfi", "--n", "30", "--m", "2", "--d", "1", "--explicit"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension guard"));
}

#[test]
fn config_errors_point_at_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.ini",
        "[sweep]\nmode = fig2\nb = 1/4\nc = 1/2\n",
    );
    let out = su2qec(&["sweep", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("line 4") && err.contains("0 ≤ c ≤ b < 1"),
        "{err}"
    );
    let out = su2qec(&["sweep", dir.path().join("missing.ini").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweeps_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[sweep]\nmode = generic_eps\ns = 1/2\nb = 0\nc = 0\ngrid = 4, 5, 6\nseed = 42\n[code]\nm_scale = 2\ndelta = 2\n[channel]\nn_kraus = 3\n";
    let cfg = write_config(dir.path(), "g.ini", body);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let out = su2qec(&["sweep", &cfg, "--out", p.to_str().unwrap()]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(x, y);
    assert!(!String::from_utf8_lossy(&x).contains("wall"));
    let meta: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["wall_time"].as_array().unwrap().len(), 3);
    // a different seed changes the channel and the data
    let c = dir.path().join("c.csv");
    assert!(
        su2qec(&["sweep", &cfg, "--seed", "43", "--out", c.to_str().unwrap()])
            .status
            .success()
    );
    assert_ne!(std::fs::read(&c).unwrap(), x);
}

#[test]
fn fig2_edge_cases() {
    // empty grid: header only, success
    let out = su2qec(&[
        "fig2",
        "--b",
        "2/3",
        "--c",
        "1/4",
        "--j-start",
        "64",
        "--j-stop",
        "32",
    ]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 1);
    // J = 2 violates M > j1 and is skipped with a warning
    let out = su2qec(&[
        "fig2",
        "--b",
        "0.1",
        "--c",
        "0.1",
        "--j-start",
        "2",
        "--j-stop",
        "64",
        "--factor",
        "32",
    ]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipped"));
    let out = su2qec(&[
        "fig2", "--b", "3/5", "--c", "1/5", "--j-stop", "1024", "--format", "json",
    ]);
    let v = json_of(&out);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows
        .windows(2)
        .all(|w| w[1]["loss_ratio"].as_f64() < w[0]["loss_ratio"].as_f64()));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fit: slope"));
}

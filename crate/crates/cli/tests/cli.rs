use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cvwitness(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvwitness"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "status {:?}, stderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn bounds_csv_has_vacuum_extremum() {
    let out = cvwitness(&["bounds", "--C", "2", "--nmax", "8"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("kind,n,value"));
    let fmax = text.lines().find(|l| l.starts_with("f_max,")).unwrap();
    let v: f64 = fmax.rsplit(',').next().unwrap().parse().unwrap();
    assert!((v - 1.0 / 3.0).abs() < 1e-9, "{fmax}");
    assert_eq!(text.lines().filter(|l| l.starts_with("o_n,")).count(), 9);
}

#[test]
fn exact_witness_on_vacuum_sits_on_the_bound() {
    let v = json(&cvwitness(&["witness", "--state", "vacuum", "--C", "1"]));
    let mean = v["estimate"]["mean"].as_f64().unwrap();
    assert!((mean - 0.5).abs() < 1e-8);
    assert_eq!(v["verdict"]["entangled"], Value::Bool(false));
}

#[test]
fn recorded_samples_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rec.csv");
    let csv = csv.to_str().unwrap();
    let args = ["witness", "--state", "tmss:s=0.5", "--C", "1", "--empirical", "--N", "2000", "--seed", "7"];
    let drawn = json(&cvwitness(&[&args[..], &["--samples-out", csv]].concat()));
    let loaded = json(&cvwitness(&["witness", "--data", csv, "--C", "1"]));
    let a = drawn["estimate"]["mean"].as_f64().unwrap();
    let b = loaded["estimate"]["mean"].as_f64().unwrap();
    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    assert_eq!(loaded["estimate"]["samples_used"], 2000);
}

#[test]
fn same_seed_same_output() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        let out = cvwitness(&[
            "witness", "--state", "cat:nu=0.5,p=0.3", "--C", "1", "--D", "2", "--empirical", "--N", "5000",
            "--seed", "11", "--out", p.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn teleport_tmss_and_pm() {
    let v = json(&cvwitness(&["teleport", "--channel", "tmss:s=0.5"]));
    let f = v["fidelity"].as_f64().unwrap();
    assert!((f - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-6);
    assert!(f >= v["bound"].as_f64().unwrap());

    let v = json(&cvwitness(&["teleport", "--channel", "pm:m=50", "--input", "fock:1"]));
    assert!((v["fidelity"].as_f64().unwrap() - 0.992).abs() < 0.005);
    assert!(v["E1"].as_f64().unwrap() >= 1.0 - 1e-9);
}

#[test]
fn baseline_reports_both_criteria() {
    let v = json(&cvwitness(&["baseline", "--criterion", "simon", "--state", "tmss:s=0.5"]));
    let nu = v["report"]["nu_minus_pt"].as_f64().unwrap();
    assert!((nu - (-1.0f64).exp() / 4.0).abs() < 1e-6);
    let v = json(&cvwitness(&["baseline", "--criterion", "duan", "--state", "vacuum"]));
    assert_eq!(v["report"]["entangled"], Value::Bool(false));
}

#[test]
fn detect_time_for_gaussian_simon() {
    let v = json(&cvwitness(&["detect-time", "--state", "tmss:s=0.5", "--nth", "0.05", "--criterion", "simon"]));
    let expected = ((1.1 - (-1.0f64).exp()) / 0.1).ln();
    assert!((v["time"].as_f64().unwrap() - expected).abs() < 2e-3);
}

#[test]
fn small_sweep_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sweep.toml",
        "axis = [0.5]\nsecond_axis = [1.0]\n[optimization]\nrefine_phases = false\n\
         [optimization.grid]\nc = 6\nd = 6\nphi_a = 1\nphi_b = 1\n",
    );
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = cvwitness(&["sweep", "--figure", "1b", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read_to_string(out).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    assert_eq!(a.lines().count(), 2);
    assert!(a.starts_with("nu,eta,series,"), "{a}");
}

#[test]
fn invalid_input_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let typo = write(dir.path(), "bad.toml", "axiz = [1.0]\n");
    let cases: Vec<Vec<&str>> = vec![
        vec!["teleport", "--channel", "laser"],
        vec!["teleport", "--channel", "pm:m=0"],
        vec!["bounds", "--C", "-1"],
        vec!["witness", "--state", "cat:nu=0.5"],
        vec!["sweep", "--figure", "3a"],
        vec!["sweep", "--figure", "1b", "--config", &typo],
        vec!["sweep", "--figure", "1b", "--config", "/nonexistent/cfg.toml"],
        vec!["witness", "--state", "vacuum", "--eta", "1.5"],
    ];
    for args in cases {
        let out = cvwitness(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn runtime_failure_exits_with_1() {
    let out = cvwitness(&["witness", "--state", "file:/nonexistent/state.txt"]);
    assert_eq!(out.status.code(), Some(1));
}

use std::path::Path;
use std::process::{Command, Output};

fn jumpkol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jumpkol"))
        .args(args)
        .env_remove("JUMPKOL_OUT_DIR")
        .output()
        .unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn csv_value(path: &Path, t: &str, state: &str) -> f64 {
    let mut r = csv::Reader::from_path(path).unwrap();
    for rec in r.records() {
        let rec = rec.unwrap();
        if &rec[0] == t && &rec[1] == state {
            return rec[2].parse().unwrap();
        }
    }
    panic!("no row ({t}, {state})");
}

#[test]
fn solve_oscillating_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("osc.json");
    std::fs::write(&spec, r#"{"family":"oscillating","params":{"support":60}}"#).unwrap();
    let out = dir.path().join("field.csv");
    let o = jumpkol(&[
        "solve", "--model", spec.to_str().unwrap(), "--u", "0", "--x", "0", "--t-grid", "0:1:0.001", "--trunc", "41",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!((csv_value(&out, "1", "0") - 0.3678794).abs() < 1e-6);
    let stdout = text(&o.stdout);
    for key in ["terms_used", "last_term_mass", "truncation_outflow", "regularity_defect"] {
        assert!(stdout.contains(key), "{stdout}");
    }
}

#[test]
fn solve_zero_model_keeps_start_state() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("zero.csv");
    let o = jumpkol(&["solve", "--model", "zero", "--x", "2", "--t", "1", "--h", "0.25", "--trunc", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let mut r = csv::Reader::from_path(&out).unwrap();
    for rec in r.records() {
        let rec = rec.unwrap();
        let v: f64 = rec[2].parse().unwrap();
        assert_eq!(v, if &rec[1] == "2" { 1.0 } else { 0.0 });
    }
}

#[test]
fn solve_reports_explosion_defect() {
    let o = jumpkol(&["solve", "--model", "explosive-birth", "--t", "1", "--trunc", "64", "--format", "json"]);
    assert!(o.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(doc["times"].as_array().unwrap().len() == 1001);
    let stderr = text(&o.stderr);
    let defect: f64 = stderr
        .lines()
        .find_map(|l| l.strip_prefix("regularity_defect "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(defect > 0.5, "{stderr}");
    assert!(stderr.contains("explosion likely"));
}

#[test]
fn solve_non_convergence_exits_2() {
    let o = jumpkol(&["solve", "--model", "poisson", "--t", "5", "--trunc", "40", "--summation", "terms", "--max-terms", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("did not converge"));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(jumpkol(&["solve", "--model", "no-such-thing", "--t", "1"]).status.code(), Some(1));
    assert_eq!(jumpkol(&["solve", "--model", "poisson"]).status.code(), Some(1));
    assert_eq!(jumpkol(&["solve", "--model", "poisson", "--t", "1", "--x", "50"]).status.code(), Some(1));
    assert_eq!(jumpkol(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(jumpkol(&["--help"]).status.code(), Some(0));
}

#[test]
fn simulate_oscillating_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let o = jumpkol(&[
            "simulate", "--model", "oscillating", "--t", "1", "--paths", "100000", "--seed", "42", "--trunc", "41", "--out",
            path.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", text(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let mut r = csv::Reader::from_path(&a).unwrap();
    let row = r.records().map(|r| r.unwrap()).find(|r| &r[1] == "0").unwrap();
    assert_eq!(&row[0], "42");
    let p: f64 = row[3].parse().unwrap();
    let se: f64 = row[4].parse().unwrap();
    assert!((p - (-1.0f64).exp()).abs() <= 4.0 * se);
}

#[test]
fn simulate_zero_model() {
    let o = jumpkol(&["simulate", "--model", "zero", "--x", "1", "--t", "3", "--paths", "50", "--trunc", "3", "--format", "json"]);
    assert!(o.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["states"][0]["state"], 1);
    assert_eq!(doc["states"][0]["p_hat"], 1.0);
    assert_eq!(doc["rng_seed"], 0);
}

#[test]
fn verify_oscillating_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_jumpkol"))
        .args(["verify", "--model", "oscillating", "--t-grid", "0:1:0.001", "--trunc", "41", "--set", "0,1,2"])
        .env("JUMPKOL_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stdout));
    let mut r = csv::Reader::from_path(dir.path().join("verify.csv")).unwrap();
    let rows: Vec<_> = r.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 5);
    for row in rows {
        let residual: f64 = row[1].parse().unwrap();
        assert!(residual <= 1e-4, "{row:?}");
    }
}

#[test]
fn verify_whole_truncation_warns() {
    let o = jumpkol(&["verify", "--model", "oscillating", "--t", "1", "--trunc", "41", "--set", "all"]);
    assert_eq!(o.status.code(), Some(0));
    let stderr = text(&o.stderr);
    assert!(stderr.contains("grows with the truncation"), "{stderr}");
}

#[test]
fn verify_zero_model_residuals_vanish() {
    let o = jumpkol(&["verify", "--model", "zero", "--x", "1", "--t", "1", "--h", "0.1", "--trunc", "3", "--set", "0,1", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let reports: Vec<serde_json::Value> = serde_json::from_slice(&o.stdout).unwrap();
    for r in reports {
        assert!(r["max_residual"].as_f64().unwrap() < 1e-12, "{r}");
    }
}

#[test]
fn verify_tight_tolerance_exits_3() {
    let o = jumpkol(&["verify", "--model", "yule", "--t", "1", "--h", "0.01", "--trunc", "40", "--integral-tol", "1e-14", "--differential-tol", "1e-14"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn check_reciprocal() {
    let o = jumpkol(&["check", "--model", "reciprocal", "--t-grid", "0:0.99:0.01", "--trunc", "2"]);
    assert!(o.status.success());
    let stdout = text(&o.stdout);
    assert!(stdout.contains("locally-bounded,holds"), "{stdout}");

    let o = jumpkol(&["check", "--model", "reciprocal", "--halfline", "--t-grid", "0:2:0.05", "--trunc", "2", "--bound-threshold", "1e300"]);
    assert!(o.status.success());
    let stdout = text(&o.stdout);
    let row = stdout.lines().find(|l| l.starts_with("locally-integrable")).unwrap();
    assert!(row.starts_with("locally-integrable,fails,0,"), "{row}");
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ioscen_cli::output::sha256_file;

fn ioscen(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ioscen"))
        .env_remove("IOSCEN_OUT_DIR")
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("spawn ioscen")
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
    for rec in r.records() {
        rows.push(rec.unwrap().iter().map(String::from).collect());
    }
    rows
}

#[test]
fn curve_writes_tables_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = ioscen(dir.path(), &["curve", "--d-list", "3", "--t-grid", "5,20", "--runs", "2", "--n-test", "200"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("curve_d3_incenter.csv"));
    assert_eq!(rows[0], ["T", "avg_gen_prob", "ci90_lower", "ci90_upper"]);
    assert_eq!(rows.len(), 3);
    let theory = csv_rows(&dir.path().join("theory_d3.csv"));
    assert_eq!(theory[0], ["T", "epsilon"]);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest_curve.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert_eq!(files.len(), 4);
    for f in files {
        let path = dir.path().join(f["path"].as_str().unwrap());
        assert_eq!(sha256_file(&path).unwrap(), f["sha256"].as_str().unwrap());
    }
}

#[test]
fn single_run_band_collapses_to_mean() {
    let dir = tempfile::tempdir().unwrap();
    let out = ioscen(dir.path(), &["curve", "--d-list", "3", "--t-grid", "10", "--runs", "1", "--estimators", "sub"]);
    assert!(out.status.success());
    let rows = csv_rows(&dir.path().join("curve_d3_sub.csv"));
    assert_eq!(rows[1][1], rows[1][2]);
    assert_eq!(rows[1][1], rows[1][3]);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["tightness", "--trials", "200", "--seed", "3"];
    assert!(ioscen(a.path(), &args).status.success());
    assert!(ioscen(b.path(), &args).status.success());
    let name = "tightness_d2_T20.csv";
    assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
    let rows = csv_rows(&a.path().join(name));
    assert_eq!(rows[0], ["eps", "empirical", "theoretical", "discarded"]);
    assert_eq!(rows.len(), 5);
}

#[test]
fn online_lower_bound_column_starts_after_d() {
    let dir = tempfile::tempdir().unwrap();
    let out = ioscen(dir.path(), &["online", "--instance", "tightness", "--d", "2", "--t", "30", "--runs", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let files: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("online_"))
        .collect();
    assert_eq!(files.len(), 1);
    let rows = csv_rows(&dir.path().join(&files[0]));
    assert_eq!(rows[0], ["t", "mean_regret", "mean_cum_regret", "lower_bound"]);
    assert_eq!(rows.len(), 31);
    assert_eq!(rows[2][3], "");
    let lb: f64 = rows[3][3].parse().unwrap();
    assert!(lb > 0.0);
    // Regret per round on the tightness instance is 0, 1 or 3 per run.
    for r in &rows[1..] {
        let v: f64 = r[1].parse().unwrap();
        assert!((0.0..=3.0).contains(&v));
    }
}

#[test]
fn example_one_checks_and_fault_injection() {
    let dir = tempfile::tempdir().unwrap();
    let ok = ioscen(dir.path(), &["verify-example1"]);
    assert_eq!(ok.status.code(), Some(0));
    let text = String::from_utf8(ok.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 4);

    let bad = ioscen(dir.path(), &["verify-example1", "--inject-fault", "incenter-row-sign"]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8(bad.stdout).unwrap().contains("FAIL incenter-infeasibility-of-boundary-point"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ioscen(dir.path(), &["curve", "--runs", "many"]).status.code(), Some(2));
    assert_eq!(ioscen(dir.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(ioscen(dir.path(), &["online", "--refit", "sometimes"]).status.code(), Some(2));
    assert_eq!(ioscen(dir.path(), &["verify-example1", "--inject-fault", "nope"]).status.code(), Some(2));
    assert_eq!(ioscen(dir.path(), &["tightness", "--d", "5", "--t", "2", "--trials", "3"]).status.code(), Some(2));
    // An output path that is a regular file fails at run time.
    let file = dir.path().join("plain");
    fs::write(&file, "").unwrap();
    assert_eq!(ioscen(&file, &["tightness", "--trials", "3"]).status.code(), Some(3));
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small run\nd_list = 3\nt-grid = 5,9\nruns = 2\nestimators = sub\n").unwrap();
    let out = ioscen(dir.path(), &["--config", cfg.to_str().unwrap(), "curve", "--runs", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("curve_d3_sub.csv"));
    assert_eq!(rows.len(), 3);
    // The flag wins over the file: one run gives a collapsed band.
    assert_eq!(rows[1][1], rows[1][2]);
    assert!(!dir.path().join("curve_d3_incenter.csv").exists());
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    fs::create_dir(&target).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ioscen"))
        .env("IOSCEN_OUT_DIR", &target)
        .args(["tightness", "--trials", "20"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(target.join("tightness_d2_T20.csv").exists());
    assert!(target.join("manifest_tightness.json").exists());
}

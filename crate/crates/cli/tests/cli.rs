use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn gwbart(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gwbart"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(path: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_step_data(dir: &Path, n: usize) -> std::path::PathBuf {
    let path = dir.join("data.csv");
    let mut text = String::from("x1,y\n");
    for i in 0..n {
        let x = (i as f64 + 0.5) / n as f64;
        text.push_str(&format!("{x},{}\n", if x < 0.5 { -1.0 } else { 1.0 }));
    }
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn sample_prior_geometric_dominates_and_is_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = ["--seed", "7", "sample-prior", "--schedule", "geometric", "--alpha", "0.25", "--draws", "70000"];
    let out = gwbart(a.path(), &[&["--threads", "1"], &args[..]].concat());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(code(&gwbart(b.path(), &[&["--threads", "3"], &args[..]].concat())), 0);
    let first = fs::read(a.path().join("sample_prior.json")).unwrap();
    assert_eq!(first, fs::read(b.path().join("sample_prior.json")).unwrap());
    let report = json(a.path().join("sample_prior.json"));
    assert_eq!(report["reports"].as_array().unwrap().len(), 5);
    assert!(report["violations"].as_array().unwrap().is_empty());
}

#[test]
fn sample_prior_flags_polynomial_rate_condition() {
    let dir = TempDir::new().unwrap();
    let out = gwbart(dir.path(), &["sample-prior", "--schedule", "poly", "--alpha", "0.95", "--gamma", "2", "--draws", "20000"]);
    let report = json(dir.path().join("sample_prior.json"));
    assert!(report["rate_condition"]["certified_from"].is_null());
    assert!(report["rate_condition"]["failures"].as_u64().unwrap() > 0);
    // the closed-form generation mean sits below the sampled one, so the Markov row is flagged
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("markov"));
}

#[test]
fn zero_draws_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = gwbart(dir.path(), &["sample-prior", "--draws", "0"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("draws"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&gwbart(dir.path(), &["bogus"])), 2);
}

#[test]
fn bounds_csv_lists_methods() {
    let dir = TempDir::new().unwrap();
    let out = gwbart(dir.path(), &["--format", "csv", "bounds", "--schedule", "geometric", "--kmax", "20"]);
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    assert!(text.starts_with("grid,method,value\n"));
    for method in ["markov", "agresti_direct", "agresti_forced", "chernoff_optimal", "target_rate"] {
        assert!(text.contains(&format!(",{method},")), "{method}");
    }
}

#[test]
fn kdtree_reports_balance_and_tree_document() {
    let dir = TempDir::new().unwrap();
    let data = write_step_data(dir.path(), 32);
    let out = gwbart(dir.path(), &["kdtree", "--data", data.to_str().unwrap(), "--rounds", "3", "--trees", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(dir.path().join("kdtree.json"));
    assert_eq!(report["leaves"], 8);
    assert_eq!(report["balanced"], true);
    assert_eq!(report["chopped"]["reconstruction_error"], 0.0);
    let tree = json(dir.path().join("kdtree_tree.json"));
    assert_eq!(tree["rounds"], 3);
    assert_eq!(tree["nodes"].as_array().unwrap().len(), 15);
}

#[test]
fn kdtree_capacity_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&gwbart(dir.path(), &["kdtree", "--n", "10", "--rounds", "4"])), 2);
}

#[test]
fn posterior_oracle_thresholds() {
    let dir = TempDir::new().unwrap();
    let out = gwbart(dir.path(), &["posterior-oracle", "--sweeps", "20000"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report = json(dir.path().join("posterior_oracle.json"));
    let sum: f64 = report["trees"].as_array().unwrap().iter().map(|t| t["exact"].as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-9);

    let out = gwbart(dir.path(), &["posterior-oracle", "--sweeps", "0"]);
    assert_eq!(code(&out), 1);
    assert_eq!(json(dir.path().join("posterior_oracle.json"))["total_variation"], 1.0);
    assert_eq!(code(&gwbart(dir.path(), &["posterior-oracle", "--sweeps", "0", "--threshold", "1.0"])), 0);
}

#[test]
fn posterior_oracle_refuses_large_designs() {
    let dir = TempDir::new().unwrap();
    let data = write_step_data(dir.path(), 13);
    let out = gwbart(dir.path(), &["posterior-oracle", "--data", data.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&gwbart(dir.path(), &["posterior-oracle", "--depth-cap", "3"])), 2);
}

#[test]
fn fit_writes_trace_and_model() {
    let dir = TempDir::new().unwrap();
    let data = write_step_data(dir.path(), 40);
    let out = gwbart(
        dir.path(),
        &["--seed", "3", "fit", "--data", data.to_str().unwrap(), "--trees", "2", "--sweeps", "50", "--burn-in", "10", "--thin", "4", "--rescale"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("sweep,K1,K2,max_k,train_error"));
    assert_eq!(lines.count(), 10);
    let model = json(dir.path().join("model.json"));
    assert_eq!(model["ensemble"]["trees"].as_array().unwrap().len(), 2);
    assert_eq!(model["scaling"]["scale"], 2.0);
    let summary = json(dir.path().join("fit.json"));
    assert_eq!(summary["kept_sweeps"], 10);
}

#[test]
fn bad_dataset_names_location() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "x1,y\n0.5,1\n1.5,2\n").unwrap();
    let out = gwbart(dir.path(), &["fit", "--data", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 2") && err.contains("x1"), "{err}");
    fs::write(&path, "").unwrap();
    let out = gwbart(dir.path(), &["fit", "--data", path.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no data rows"));
}

#[test]
fn concentration_outputs_are_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = ["--format", "csv", "concentration", "--sizes", "40,80", "--replicates", "2", "--trees", "3", "--sweeps", "40", "--burn-in", "10"];
    assert_eq!(code(&gwbart(a.path(), &args)), 0);
    assert_eq!(code(&gwbart(b.path(), &[&["--threads", "1"], &args[..]].concat())), 0);
    for file in ["concentration.csv", "concentration.dat"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file}");
    }
    let csv = fs::read_to_string(a.path().join("concentration.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(fs::read_to_string(a.path().join("concentration.dat")).unwrap().starts_with("# n "));
}

#[test]
fn concentration_table_target_needs_smoothness() {
    let dir = TempDir::new().unwrap();
    let data = write_step_data(dir.path(), 30);
    let out = gwbart(dir.path(), &["concentration", "--data", data.to_str().unwrap(), "--replicates", "2", "--sweeps", "20", "--burn-in", "5"]);
    assert_eq!(code(&out), 2);
    let out = gwbart(
        dir.path(),
        &["concentration", "--data", data.to_str().unwrap(), "--smoothness", "1", "--replicates", "2", "--sweeps", "20", "--burn-in", "5"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

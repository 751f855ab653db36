use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use num_complex::Complex64;

use gfflab::operator::PotentialSpec;
use gfflab::partition::partition_series;
use gfflab::spectrum::sphere_spectrum;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn gfflab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gfflab")).args(args).output().unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

fn digests(dir: &Path) -> Vec<(String, String)> {
    manifest(dir)["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| (f["path"].as_str().unwrap().to_owned(), f["sha256"].as_str().unwrap().to_owned()))
        .collect()
}

#[test]
fn partition_matches_golden_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture("sphere_partition.json");
    let out = gfflab(&["partition", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let got = std::fs::read_to_string(tmp.path().join("partition.csv")).unwrap();
    let want = std::fs::read_to_string(fixture("sphere_partition.golden.csv")).unwrap();
    assert_eq!(got, want);

    let sys = sphere_spectrum(200).unwrap();
    let v = PotentialSpec::Constant(1.0);
    for row in want.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        let lam: f64 = cols[0].parse().unwrap();
        let z: f64 = cols[1].parse().unwrap();
        let oracle = partition_series(&sys, &v, Complex64::new(lam, 0.0), None).unwrap().value;
        assert!((z - oracle.re).abs() <= 1e-10, "lambda {lam}: {z} vs {oracle}");
    }
}

fn write_mc_config(dir: &Path) -> PathBuf {
    let path = dir.join("mc.json");
    std::fs::write(
        &path,
        r#"{
  "geometry": {"kind": "sphere", "k_max": 12},
  "lambdas": [0.5],
  "mc": {"samples": 20000, "seed": 7, "lambda": 0.5, "trace_every": 5000}
}"#,
    )
    .unwrap();
    path
}

#[test]
fn mc_is_reproducible_across_runs_and_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_mc_config(tmp.path());
    let mut runs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let dir = tmp.path().join(name);
        let out = gfflab(&["mc", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap(), "--threads", threads]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        runs.push(digests(&dir));
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn seed_flag_changes_mc_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_mc_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(gfflab(&["mc", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]).status.success());
    assert!(gfflab(&["mc", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--seed", "8"]).status.success());
    assert_ne!(digests(&a), digests(&b));
    assert_eq!(manifest(&b)["seed"], 8);
}

#[test]
fn manifest_lists_each_output_once() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture("sphere_partition.json");
    let out = gfflab(&["spectrum", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success());
    let files = digests(tmp.path());
    let mut names: Vec<&str> = files.iter().map(|(p, _)| p.as_str()).collect();
    names.sort();
    let n = names.len();
    names.dedup();
    assert_eq!(names.len(), n);
    assert_eq!(names, ["spectrum.json", "spectrum.txt"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), n);
}

#[test]
fn malformed_config_exits_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, "{\"geometry\": {\"kind\": \"sphere\", \"k_max\": 10},\n \"lambdas\": [0.1,]}").unwrap();
    let dir = tmp.path().join("out");
    let out = gfflab(&["partition", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    assert!(!dir.exists());
}

#[test]
fn missing_section_exits_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture("sphere_partition.json");
    let dir = tmp.path().join("out");
    let out = gfflab(&["xray", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.exists());
}

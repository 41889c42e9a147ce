use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "seed = 3\n[data]\nn_buildings = 2\nn_days = 70\n[eval]\nmax_days = 2\n";

fn tclflex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tclflex")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn manifest_files(dir: &Path) -> Vec<String> {
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    m["files"].as_array().unwrap().iter().map(|f| f["file"].as_str().unwrap().to_string()).collect()
}

#[test]
fn run_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("run");
    let o = tclflex(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files = manifest_files(&out);
    assert!(files.contains(&"summary.json".to_string()) && files.contains(&"kappa_trace.csv".to_string()));

    let o = tclflex(&["report", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let first = fs::read(out.join("report.json")).unwrap();
    assert!(tclflex(&["report", "--out", out.to_str().unwrap()]).status.success());
    assert_eq!(first, fs::read(out.join("report.json")).unwrap());
    assert!(manifest_files(&out).contains(&"metrics_breakdown.csv".to_string()));
}

#[test]
fn generated_data_feeds_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let data = tmp.path().join("data");
    let o = tclflex(&["gen-data", "--config", &cfg, "--seed", "11", "--out", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(manifest_files(&data).contains(&"attributes.json".to_string()));

    let body = format!("[data]\npath = {:?}\n[eval]\nmax_days = 1\n", data.to_str().unwrap());
    let cfg2 = tmp.path().join("from_csv.toml");
    fs::write(&cfg2, body).unwrap();
    let out = tmp.path().join("baselines");
    let o = tclflex(&["baselines", "--config", cfg2.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("baselines.json").is_file());
}

#[test]
fn seed_flag_changes_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let cost = |seed: &str, name: &str| {
        let out = tmp.path().join(name);
        let o = tclflex(&["run", "--config", &cfg, "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        assert_eq!(s["seed"].as_u64().unwrap().to_string(), seed);
        s["total_cost"].as_f64().unwrap()
    };
    assert_eq!(cost("5", "a").to_bits(), cost("5", "b").to_bits());
    assert_ne!(cost("5", "c").to_bits(), cost("6", "d").to_bits());
}

#[test]
fn sweep_writes_one_directory_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("sweep");
    let o = tclflex(&["sweep", "--config", &cfg, "--seeds", "1,2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("seed_1/summary.json").is_file() && out.join("seed_2/summary.json").is_file());
    assert!(manifest_files(&out).contains(&"sweep_summary.json".to_string()));
}

#[test]
fn config_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let bad = write_config(tmp.path(), "horizon = 0\n");
    assert_eq!(tclflex(&["run", "--config", &bad, "--out", out.to_str().unwrap()]).status.code(), Some(2));
    let unknown = tmp.path().join("unknown.toml");
    fs::write(&unknown, "bogus = 1\n").unwrap();
    assert_eq!(tclflex(&["run", "--config", unknown.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(tclflex(&["run", "--config", "/no/such/file.toml", "--out", out.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(tclflex(&["run"]).status.code(), Some(2));
    assert_eq!(tclflex(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tclflex(&["report", "--out", tmp.path().join("empty").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[report]"));
}

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qca(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qca"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env_remove("QCA_OUT_DIR")
        .output()
        .expect("failed to launch qca")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("terminated by signal")
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn manifest(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&read(path)).unwrap()
}

#[test]
fn exact_dense_writes_one_row_per_step_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = qca(dir.path(), &["exact", "--L", "4", "--pattern", "◦••◦", "--lambda", "0.5", "--steps", "20", "--mode", "dense"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(dir.path().join("exact.csv"));
    assert_eq!(csv.lines().count(), 22);
    assert!(csv.starts_with("t,mean_density,purity,n_0,sx_0,sy_0"));
    let m = manifest(dir.path().join("exact.manifest.json"));
    assert_eq!(m["command"], "exact");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["config"]["pattern"], "◦••◦");
    assert_eq!(m["outputs"], serde_json::json!(["exact.csv"]));
}

#[test]
fn ascii_pattern_aliases_match_symbols() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&qca(a.path(), &["exact", "--pattern", "◦••◦", "--steps", "3"])), 0);
    assert_eq!(code(&qca(b.path(), &["exact", "--pattern", "oxxo", "--steps", "3"])), 0);
    assert_eq!(read(a.path().join("exact.csv")), read(b.path().join("exact.csv")));
}

#[test]
fn dense_capacity_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = qca(dir.path(), &["exact", "--L", "10", "--mode", "dense"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("capacity"));
    assert!(!dir.path().join("exact.manifest.json").exists());
}

#[test]
fn seeded_trajectories_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["exact", "--L", "5", "--mode", "trajectory", "--samples", "3000", "--seed", "7", "--steps", "6"];
    assert_eq!(code(&qca(a.path(), &args)), 0);
    let mut threaded = vec!["--threads", "3"];
    threaded.extend(args);
    assert_eq!(code(&qca(b.path(), &threaded)), 0);
    assert_eq!(read(a.path().join("exact.csv")), read(b.path().join("exact.csv")));
    assert_eq!(manifest(a.path().join("exact.manifest.json"))["seed"], 7);
}

#[test]
fn sweep_is_byte_identical_and_replayable_from_its_manifest() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let args = ["sweep", "--lambda", "0:1:11", "--p-branch", "0:1:21", "--iters", "400", "--pgm"];
    assert_eq!(code(&qca(a.path(), &args)), 0);
    assert_eq!(code(&qca(b.path(), &args)), 0);
    let csv = read(a.path().join("sweep.csv"));
    assert_eq!(csv, read(b.path().join("sweep.csv")));
    assert_eq!(csv.lines().count(), 1 + 11 * 21);
    let pgm = std::fs::read(a.path().join("sweep.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n21 11\n255\n"));

    let m = a.path().join("sweep.manifest.json");
    let o = qca(c.path(), &["--config", m.to_str().unwrap(), "sweep"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv, read(c.path().join("sweep.csv")));
    assert_eq!(
        manifest(&m)["config_hash"],
        manifest(c.path().join("sweep.manifest.json"))["config_hash"]
    );
}

#[test]
fn sweep_rejects_empty_and_malformed_grids() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&qca(dir.path(), &["sweep", "--lambda", "0:1:0"])), 2);
    assert_eq!(code(&qca(dir.path(), &["sweep", "--p-branch", "0:1"])), 2);
    assert_eq!(code(&qca(dir.path(), &["sweep", "--lambda", "0:2:3"])), 2);
}

#[test]
fn toml_config_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "lambda = 0.3\np_branch = 0.4\niters = 50\nn0 = 0.5\n").unwrap();
    let o = qca(dir.path(), &["--config", cfg.to_str().unwrap(), "meanfield", "--iters", "10"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(dir.path().join("meanfield.csv")).lines().count(), 12);
    let m = manifest(dir.path().join("meanfield.manifest.json"));
    assert_eq!(m["config"]["lambda"], 0.3);
    assert_eq!(m["config"]["iters"], 10);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"lamda": 0.3}"#).unwrap();
    assert_eq!(code(&qca(dir.path(), &["--config", cfg.to_str().unwrap(), "meanfield"])), 2);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_qca"))
        .args(["meanfield", "--iters", "5"])
        .env("QCA_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("meanfield.csv").exists());
}

#[test]
fn classical_verification_and_decay() {
    let dir = tempfile::tempdir().unwrap();
    let o = qca(dir.path(), &["classical", "--L", "4", "--verify-exact", "--trials", "200", "--steps", "10"]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    let line = stdout.lines().find(|l| l.starts_with("verify-exact")).unwrap();
    let dev: f64 = line.split("= ").nth(1).unwrap().split(' ').next().unwrap().parse().unwrap();
    assert!(dev < 1e-10, "{line}");

    let o = qca(dir.path(), &["classical", "--L", "16", "--p-branch", "0", "--steps", "60", "--trials", "300"]);
    assert_eq!(code(&o), 0);
    let density: Vec<f64> = read(dir.path().join("classical.csv"))
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(density.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(*density.last().unwrap(), 0.0);
}

#[test]
fn classical_seed_reruns_are_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["classical", "--L", "24", "--trials", "400", "--steps", "40", "--seed", "5"];
    assert_eq!(code(&qca(a.path(), &args)), 0);
    assert_eq!(code(&qca(b.path(), &args)), 0);
    assert_eq!(read(a.path().join("classical.csv")), read(b.path().join("classical.csv")));
}

fn map_qcp_json(dir: &Path, args: &[&str]) -> Value {
    let mut full = vec!["map-qcp"];
    full.extend(args);
    let o = qca(dir, &full);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    let json_end = text.rfind('}').unwrap();
    serde_json::from_str(&text[..=json_end]).unwrap()
}

#[test]
fn map_qcp_reports_rates_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let v = map_qcp_json(dir.path(), &["--lambda", "0"]);
    assert_eq!(v["omega"], 0.0);
    assert_eq!(v["g"], 0.0);

    let v = map_qcp_json(dir.path(), &["--lambda", "0.92", "--p-branch", "0.6174"]);
    let g = v["g"].as_f64().unwrap();
    assert!((3.75..=4.35).contains(&g), "g = {g}");

    let v = map_qcp_json(dir.path(), &["--p-branch", "0"]);
    assert_eq!(v["g"], "undefined");

    let v = map_qcp_json(dir.path(), &["--gamma", "0.2", "--kappa-b", "0.5", "--dt", "10"]);
    assert_eq!(v["invalid_discretization"], true);
    assert!(dir.path().join("map-qcp.manifest.json").exists());
}

#[test]
fn critical_without_transition_warns_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = qca(dir.path(), &["critical", "--lambda", "0:0.1:3", "--resolution", "0.01"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("no lambda* found"));
    let transitions = read(dir.path().join("critical.transitions.csv"));
    assert_eq!(transitions.lines().count(), 4);
    assert!(transitions.lines().skip(1).all(|l| l.contains(",continuous,")));
    assert_eq!(read(dir.path().join("critical.csv")).lines().count(), 4);
}

#[test]
fn critical_rejects_malformed_ranges() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&qca(dir.path(), &["critical", "--lambda", "0.5:x:3"])), 2);
    assert_eq!(code(&qca(dir.path(), &["critical", "--lambda", "0.5,0.4"])), 2);
}

#[test]
fn clap_usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&qca(dir.path(), &["exact", "--no-such-flag"])), 2);
    assert_eq!(code(&qca(dir.path(), &["exact", "--lambda", "1.5"])), 2);
}

use std::path::Path;
use std::process::Command;

use epw::config::RunConfig;
use epw::harness::{execute, run_scenario};
use serde_json::Value;
use sha2::{Digest, Sha256};

fn small(scenario: &str) -> RunConfig {
    let mut c = RunConfig::default();
    c.scenario = scenario.into();
    c.grid.length = 16.0;
    c.grid.n = 16;
    c.forcing.amplitude = 0.2;
    c.solver.n_t = 8;
    c.solver.tol = 1e-9;
    c.simulation.t_end = Some(2.0);
    c.simulation.fit_start = 0.5;
    c.simulation.sample_every = 1;
    c.simulation.probe_samples = 200;
    c
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn check_manifest(dir: &Path) -> Value {
    let m = manifest(dir);
    for f in m["files"].as_array().unwrap() {
        let bytes = std::fs::read(dir.join(f["path"].as_str().unwrap())).unwrap();
        let digest = hex::encode(Sha256::digest(&bytes));
        assert_eq!(f["sha256"].as_str().unwrap(), digest, "{}", f["path"]);
        assert_eq!(f["bytes"].as_u64().unwrap(), bytes.len() as u64);
    }
    m
}

#[test]
fn verify_symbols_passes_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::default();
    c.simulation.probe_samples = 300;
    assert_eq!(execute(&c, dir.path()), 0);
    let m = check_manifest(dir.path());
    assert_eq!(m["status"], "passed");
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(summary["max_violation"].as_f64().unwrap() < 1e-8);
    let csv = std::fs::read_to_string(dir.path().join("verify_symbols.csv")).unwrap();
    assert_eq!(csv.lines().count(), 8);
    assert!(csv.lines().skip(1).all(|l| l.ends_with("true")));
}

#[test]
fn measure_decay_with_nothing_to_measure() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small("measure-decay");
    c.forcing.amplitude = 0.0;
    c.simulation.data_amplitude = 0.0;
    assert_eq!(execute(&c, dir.path()), 0);
    check_manifest(dir.path());
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(traj.lines().skip(1).all(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap() == 0.0));
    let decay = std::fs::read_to_string(dir.path().join("decay.csv")).unwrap();
    assert_eq!(decay.lines().skip(1).filter(|l| l.contains("degenerate data")).count(), 8);
}

#[test]
fn unknown_scenario_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let c = small("solve-everything");
    assert_eq!(execute(&c, dir.path()), 2);
    let err = std::fs::read_to_string(dir.path().join("error.json")).unwrap();
    assert!(err.contains("unknown scenario"));
    assert_eq!(manifest(dir.path())["status"], "error");
}

#[test]
fn invalid_configuration_is_rejected_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small("solve-periodic");
    c.solver.c0 = Some(3.0);
    c.solver.c1 = Some(2.0);
    assert_eq!(execute(&c, dir.path()), 1);
    let err: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("error.json")).unwrap()).unwrap();
    assert_eq!(err["error"], "config");
    assert!(!dir.path().join("iterations.csv").exists());
}

#[test]
fn identical_configs_give_identical_tables() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let c = small("simulate-cauchy");
    assert_eq!(execute(&c, a.path()), 0);
    assert_eq!(execute(&c, b.path()), 0);
    for name in ["trajectory.csv", "u_final.epwf"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
    }
    assert_eq!(manifest(a.path())["files"], manifest(b.path())["files"]);
}

#[test]
fn periodic_scenarios_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_scenario(&small("probe-regularity"), dir.path()).unwrap();
    assert!(r.passed);
    let csv = std::fs::read_to_string(dir.path().join("regularity.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10);
    let names: Vec<&str> = r.files.iter().map(|f| f.path.as_str()).collect();
    assert!(names.contains(&"iterations.csv") && names.contains(&"summary.json"));

    let dir = tempfile::tempdir().unwrap();
    let r = run_scenario(&small("solve-periodic"), dir.path()).unwrap();
    assert!(r.summary["periodicity_defect"].as_f64().unwrap() < 1e-8);
    assert_eq!(std::fs::read_to_string(dir.path().join("nodes.csv")).unwrap().lines().count(), 10);
}

#[test]
fn kernel_probe_scenario_tabulates_every_case() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small("probe-kernels");
    c.simulation.t_end = Some(12.0);
    let r = run_scenario(&c, dir.path()).unwrap();
    assert!(r.passed);
    let csv = std::fs::read_to_string(dir.path().join("probes.csv")).unwrap();
    assert_eq!(csv.lines().count(), 12);
}

#[test]
fn config_files_round_trip_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let mut c = small("verify-symbols");
    c.simulation.probe_samples = 50;
    std::fs::write(&cfg, c.to_toml()).unwrap();
    let out = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_epw"))
        .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", "1", "--seed", "5"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(manifest(&out)["seed"], 5);

    let bad = Command::new(env!("CARGO_BIN_EXE_epw"))
        .args(["no-such-thing", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unknown scenario"));

    std::fs::write(&cfg, "[solver]\ntolerance = 1.0\n").unwrap();
    let unknown_key = Command::new(env!("CARGO_BIN_EXE_epw")).args(["--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(unknown_key.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown_key.stderr).contains("tolerance"));
}

use std::path::Path;
use std::process::{Command, Output};

use splt::config::ScenarioConfig;

fn splt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splt")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn config_prints_defaults() {
    let out = splt(&["config"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(ScenarioConfig::parse_str(&text).unwrap(), ScenarioConfig::default());
    for section in ["[sim]", "[channel]", "[sfv]", "[zone]", "[mobility]"] {
        assert!(text.contains(section), "{section}");
    }
}

#[test]
fn empty_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("empty.ini");
    std::fs::write(&file, "").unwrap();
    let out = splt(&["config", "--config", p(&file), "--set", "sim.runs=3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let cfg = ScenarioConfig::parse_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg.sim.runs, 3);
    assert_eq!(cfg.sim.node_count, 60);
}

#[test]
fn flags_override_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.ini");
    std::fs::write(&file, "[mobility]\nv_max = 12\n").unwrap();
    let out = splt(&["config", "--config", p(&file), "--set", "mobility.v_max=7"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8(out.stdout).unwrap().contains("v_max = 7\n"));
}

#[test]
fn speed_bounds_error_names_both_keys() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.ini");
    std::fs::write(&file, "[mobility]\nv_max = 2\nv_min = 5\n").unwrap();
    let out = splt(&["config", "--config", p(&file)]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("v_min") && err.contains("v_max"), "{err}");
}

#[test]
fn unknown_key_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.ini");
    std::fs::write(&file, "[sim]\nnode_count = 10\nnodes = 3\n").unwrap();
    let out = splt(&["run", "energy", "--config", p(&file), "--out", p(dir.path())]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("line 3") && err.contains("nodes"), "{err}");
}

#[test]
fn unknown_scenario_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = splt(&["run", "bogus", "--out", p(dir.path())]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("bogus"));
}

#[test]
fn missing_config_file_fails() {
    let out = splt(&["config", "--config", "/nonexistent/splt.ini"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("/nonexistent/splt.ini"));
}

#[test]
fn energy_run_writes_decreasing_table_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = splt(&["run", "--scenario", "energy", "--out", p(dir.path())]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("energy.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("m_beams,energy"));
    let energy: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(energy.len(), 8);
    assert!(energy.windows(2).all(|w| w[1] < w[0]), "{energy:?}");
    let echoed = std::fs::read_to_string(dir.path().join("config.ini")).unwrap();
    let cfg = ScenarioConfig::parse_str(&echoed).unwrap();
    assert_eq!(cfg.sim.scenario, "energy");
}

#[test]
fn conflicting_scenario_names_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = splt(&["run", "energy", "--scenario", "detection", "--out", p(dir.path())]);
    assert!(!out.status.success());
}

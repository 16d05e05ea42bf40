//! Named experiment sets and the files each one writes.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::channel::received_energy;
use crate::config::{ConfigError, ScenarioConfig, ENERGY_SWEEP_BEAMS};
use crate::crypto::derive_seed;
use crate::engine::{run_scenario, SwitchEvent};
use crate::metrics::{self, MetricsError, MetricsLog};
use crate::protocol::{detection_rate, detection_single, monte_carlo_detection, AdversaryModel, ProtocolError};

pub const SCENARIOS: [&str; 7] = ["detection", "multi-target", "trajectory", "switching", "energy", "friendliness", "all"];

/// Replay probabilities swept for each of the three adversary channels.
pub const DETECTION_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const DETECTION_KEYS: [u32; 4] = [1, 2, 4, 8];
pub const SWITCHING_SPEEDS: [f64; 4] = [5.0, 10.0, 15.0, 20.0];

const TAG_DETECTION: u64 = 0x4000;
const TAG_RUN: u64 = 0x5000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{0}` (expected one of: {list})", list = SCENARIOS.join(", "))]
    Unknown(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRow {
    pub p_wh: f64,
    pub p_i: f64,
    pub p_r: f64,
    pub n: u32,
    pub closed_form: f64,
    pub monte_carlo: f64,
}

pub fn detection_rows(cfg: &ScenarioConfig) -> Result<Vec<DetectionRow>, ProtocolError> {
    let mut grid = Vec::new();
    for &p_wh in &DETECTION_GRID {
        for &p_i in &DETECTION_GRID {
            for &p_r in &DETECTION_GRID {
                for &n in &DETECTION_KEYS {
                    grid.push((p_wh, p_i, p_r, n));
                }
            }
        }
    }
    let master = cfg.sim.master_seed;
    let trials = cfg.sfv.trials;
    grid.into_par_iter()
        .enumerate()
        .map(|(k, (p_wh, p_i, p_r, n))| {
            let adv = AdversaryModel::new(p_wh, p_i, p_r)?;
            Ok(DetectionRow {
                p_wh,
                p_i,
                p_r,
                n,
                closed_form: detection_rate(&adv, n)?,
                monte_carlo: monte_carlo_detection(&adv, n, trials, derive_seed(master, TAG_DETECTION + k as u64))?,
            })
        })
        .collect()
}

/// Per-key probability used by the grid; exposed for reports.
pub fn single_key_probability(p_wh: f64, p_i: f64, p_r: f64) -> Result<f64, ProtocolError> {
    Ok(detection_single(&AdversaryModel::new(p_wh, p_i, p_r)?))
}

pub fn energy_rows(cfg: &ScenarioConfig) -> Vec<(usize, f64)> {
    (1..=ENERGY_SWEEP_BEAMS).map(|m| (m, received_energy(&cfg.channel, m).expect("m >= 1"))).collect()
}

/// Master seeds of the repeated runs, derived from the configured one.
pub fn run_seeds(cfg: &ScenarioConfig) -> Vec<u64> {
    (0..cfg.sim.runs as u64).map(|k| derive_seed(cfg.sim.master_seed, TAG_RUN + k)).collect()
}

fn with_scenario(cfg: &ScenarioConfig, name: &str, seed: u64) -> ScenarioConfig {
    let mut c = cfg.clone();
    c.sim.scenario = name.to_string();
    c.sim.master_seed = seed;
    c
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyRow {
    /// The cluster head's sector the target roams in, 1-based.
    pub sector: usize,
    pub seed: u64,
    pub efficiency: f64,
}

pub fn efficiency_rows(cfg: &ScenarioConfig) -> Result<Vec<EfficiencyRow>, ScenarioError> {
    let sectors = cfg.sim.sectors;
    let per_seed: Vec<Result<Vec<EfficiencyRow>, ScenarioError>> = run_seeds(cfg)
        .into_par_iter()
        .map(|seed| {
            let log = run_scenario(&with_scenario(cfg, "multi-target", seed))?;
            log.targets
                .iter()
                .map(|t| {
                    Ok(EfficiencyRow {
                        sector: (t.label - 1) % sectors + 1,
                        seed,
                        efficiency: metrics::plt_efficiency(t, cfg.sim.efficiency_tol)?,
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_seed {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Mean efficiency per sector label `1..=S`.
pub fn mean_efficiency_by_sector(rows: &[EfficiencyRow], sectors: usize) -> Vec<f64> {
    (1..=sectors)
        .map(|s| {
            let v: Vec<f64> = rows.iter().filter(|r| r.sector == s).map(|r| r.efficiency).collect();
            if v.is_empty() {
                f64::NAN
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadRow {
    pub v_max: f64,
    pub seed: u64,
    pub switches: usize,
    pub overhead: f64,
}

/// Random-layout runs at each top speed over the same seeds.
pub fn switching_sweep(cfg: &ScenarioConfig) -> Result<(Vec<OverheadRow>, Vec<SwitchEvent>), ScenarioError> {
    let seeds = run_seeds(cfg);
    let jobs: Vec<(f64, u64)> = SWITCHING_SPEEDS.iter().flat_map(|&v| seeds.iter().map(move |&s| (v, s))).collect();
    let results: Vec<Result<(OverheadRow, Vec<SwitchEvent>), ScenarioError>> = jobs
        .into_par_iter()
        .map(|(v_max, seed)| {
            let mut c = with_scenario(cfg, "switching", seed);
            c.mobility.v_max = v_max;
            c.mobility.v_min = c.mobility.v_min.min(v_max);
            let log = run_scenario(&c)?;
            let overhead = metrics::switching_overhead(&log, (0.0, c.sim.duration + 1.0));
            Ok((OverheadRow { v_max, seed, switches: log.switches.len(), overhead }, log.switches))
        })
        .collect();
    let mut rows = Vec::new();
    let mut events = Vec::new();
    for r in results {
        let (row, ev) = r?;
        rows.push(row);
        events.extend(ev);
    }
    Ok((rows, events))
}

pub fn trajectory_log(cfg: &ScenarioConfig) -> Result<MetricsLog, ScenarioError> {
    Ok(run_scenario(&with_scenario(cfg, "trajectory", cfg.sim.master_seed))?)
}

pub fn friendliness_log(cfg: &ScenarioConfig) -> Result<MetricsLog, ScenarioError> {
    Ok(run_scenario(&with_scenario(cfg, "friendliness", cfg.sim.master_seed))?)
}

fn mkdir(dir: &Path) -> Result<(), ScenarioError> {
    std::fs::create_dir_all(dir).map_err(|source| ScenarioError::Io { path: dir.to_path_buf(), source })
}

/// Runs scenario `name`, writing its CSVs and the effective config under
/// `out_dir`. `all` gives each scenario its own subdirectory.
pub fn run(name: &str, cfg: &ScenarioConfig, out_dir: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
    if !SCENARIOS.contains(&name) {
        return Err(ScenarioError::Unknown(name.to_string()));
    }
    cfg.validate()?;
    mkdir(out_dir)?;
    let echo = out_dir.join("config.ini");
    std::fs::write(&echo, cfg.echo()).map_err(|source| ScenarioError::Io { path: echo.clone(), source })?;
    let mut files = vec![echo];
    if name == "all" {
        for sub in SCENARIOS.iter().filter(|s| **s != "all") {
            let dir = out_dir.join(sub);
            mkdir(&dir)?;
            files.extend(run_one(sub, cfg, &dir)?);
        }
    } else {
        files.extend(run_one(name, cfg, out_dir)?);
    }
    Ok(files)
}

fn run_one(name: &str, cfg: &ScenarioConfig, dir: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
    let f = |n: &str| dir.join(n);
    match name {
        "detection" => {
            let path = f("detection.csv");
            let rows = detection_rows(cfg)?;
            metrics::write_table(
                &path,
                &metrics::DETECTION_HEADER,
                rows.iter().map(|r| {
                    [
                        r.p_wh.to_string(),
                        r.p_i.to_string(),
                        r.p_r.to_string(),
                        r.n.to_string(),
                        r.closed_form.to_string(),
                        r.monte_carlo.to_string(),
                    ]
                }),
            )?;
            Ok(vec![path])
        }
        "energy" => {
            let path = f("energy.csv");
            metrics::write_table(
                &path,
                &metrics::ENERGY_HEADER,
                energy_rows(cfg).iter().map(|(m, e)| [m.to_string(), e.to_string()]),
            )?;
            Ok(vec![path])
        }
        "multi-target" => {
            let path = f("efficiency.csv");
            let rows = efficiency_rows(cfg)?;
            metrics::write_table(
                &path,
                &metrics::EFFICIENCY_HEADER,
                rows.iter().map(|r| [r.sector.to_string(), r.seed.to_string(), r.efficiency.to_string()]),
            )?;
            Ok(vec![path])
        }
        "switching" => {
            let (rows, events) = switching_sweep(cfg)?;
            let log = MetricsLog { switches: events, ..MetricsLog::default() };
            let sw = f("switching.csv");
            metrics::write_table(&sw, &metrics::SWITCHING_HEADER, metrics::switching_rows(&log))?;
            let ov = f("overhead.csv");
            metrics::write_table(
                &ov,
                &metrics::OVERHEAD_HEADER,
                rows.iter().map(|r| [r.v_max.to_string(), r.seed.to_string(), r.switches.to_string(), r.overhead.to_string()]),
            )?;
            Ok(vec![sw, ov])
        }
        "trajectory" => Ok(metrics::write_csv(&trajectory_log(cfg)?, dir)?),
        "friendliness" => Ok(metrics::write_csv(&friendliness_log(cfg)?, dir)?),
        other => Err(ScenarioError::Unknown(other.to_string())),
    }
}

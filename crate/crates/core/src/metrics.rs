//! Simulation logs, the measures derived from them, and CSV output.

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::{Estimate, SwitchEvent};
use crate::geometry::Position;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("track {0} has an empty sample schedule")]
    EmptySchedule(u64),
    #[error("track {0} has no estimates")]
    NoEstimates(u64),
    #[error("efficiency tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FriendlinessEventKind {
    Friendly,
    Malicious,
    ReauthFail,
    ScanStart,
    TrackingResumed,
}

impl fmt::Display for FriendlinessEventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FriendlinessEventKind::Friendly => "friendly",
            FriendlinessEventKind::Malicious => "malicious",
            FriendlinessEventKind::ReauthFail => "reauth_fail",
            FriendlinessEventKind::ScanStart => "scan_start",
            FriendlinessEventKind::TrackingResumed => "tracking_resumed",
        })
    }
}

/// `delay` is the scan length for `ScanStart` and the time since the
/// triggering failure for `TrackingResumed`; zero otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FriendlinessEvent {
    pub t: f64,
    pub node: u64,
    pub peer: u64,
    pub kind: FriendlinessEventKind,
    pub delay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContentionEvent {
    pub t: f64,
    pub node: u64,
    pub target: u64,
    pub sector: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VerdictCounts {
    pub friendly: u64,
    pub malicious: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetLog {
    pub target: u64,
    pub label: usize,
    /// True position at every scheduled sample instant.
    pub truth: Vec<(f64, Position)>,
    pub estimates: Vec<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsLog {
    pub scenario: String,
    pub master_seed: u64,
    pub config_echo: String,
    pub schedule: Vec<f64>,
    pub targets: Vec<TargetLog>,
    pub switches: Vec<SwitchEvent>,
    pub friendliness: Vec<FriendlinessEvent>,
    pub contentions: Vec<ContentionEvent>,
    pub verdicts: VerdictCounts,
    pub events_dispatched: u64,
    pub trace_digest: u64,
}

impl MetricsLog {
    pub fn target_by_label(&self, label: usize) -> Option<&TargetLog> {
        self.targets.iter().find(|t| t.label == label)
    }
}

/// Fraction of scheduled instants with an estimate taken at that instant
/// and lying within `tol` of the truth.
pub fn plt_efficiency(track: &TargetLog, tol: f64) -> Result<f64, MetricsError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(MetricsError::BadTolerance(tol));
    }
    if track.truth.is_empty() {
        return Err(MetricsError::EmptySchedule(track.target));
    }
    let mut hits = 0usize;
    let mut est = track.estimates.iter().peekable();
    for (t, truth) in &track.truth {
        while est.next_if(|e| e.t < *t).is_some() {}
        if let Some(e) = est.peek() {
            if e.t == *t && e.position.distance(truth) <= tol {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / track.truth.len() as f64)
}

pub fn mean_tracking_error(track: &TargetLog) -> Result<f64, MetricsError> {
    if track.estimates.is_empty() {
        return Err(MetricsError::NoEstimates(track.target));
    }
    let sum: f64 = track.estimates.iter().map(|e| e.position.distance(&e.truth)).sum();
    Ok(sum / track.estimates.len() as f64)
}

/// Scan and authentication delay of switches triggered in `[start, end)`.
pub fn switching_overhead(log: &MetricsLog, window: (f64, f64)) -> f64 {
    log.switches.iter().filter(|s| s.t >= window.0 && s.t < window.1).map(|s| s.delay).sum()
}

pub const DETECTION_HEADER: [&str; 6] = ["p_wh", "p_i", "p_r", "n", "closed_form", "monte_carlo"];
pub const EFFICIENCY_HEADER: [&str; 3] = ["sector", "seed", "efficiency"];
pub const TRAJECTORY_HEADER: [&str; 7] = ["target", "t", "true_x", "true_y", "est_x", "est_y", "err"];
pub const SWITCHING_HEADER: [&str; 6] = ["t", "target", "old_ref", "new_ref", "cause", "delay_s"];
pub const ENERGY_HEADER: [&str; 2] = ["m_beams", "energy"];
pub const FRIENDLINESS_HEADER: [&str; 5] = ["t", "node", "peer", "event", "delay_s"];
pub const OVERHEAD_HEADER: [&str; 4] = ["v_max", "seed", "switches", "overhead_s"];

/// Writes a header and rows; floats should already be rendered with `{}`.
pub fn write_table<R, I>(path: &Path, header: &[&str], rows: I) -> Result<(), MetricsError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush().map_err(|source| MetricsError::Io { path: path.to_path_buf(), source })?;
    Ok(())
}

pub fn trajectory_rows(log: &MetricsLog) -> Vec<[String; 7]> {
    log.targets
        .iter()
        .flat_map(|t| {
            t.estimates.iter().map(move |e| {
                [
                    t.label.to_string(),
                    e.t.to_string(),
                    e.truth.x.to_string(),
                    e.truth.y.to_string(),
                    e.position.x.to_string(),
                    e.position.y.to_string(),
                    e.error.to_string(),
                ]
            })
        })
        .collect()
}

pub fn switching_rows(log: &MetricsLog) -> Vec<[String; 6]> {
    log.switches
        .iter()
        .map(|s| {
            [
                s.t.to_string(),
                s.target.to_string(),
                s.old_ref.to_string(),
                s.new_ref.map(|r| r.to_string()).unwrap_or_default(),
                s.cause.to_string(),
                s.delay.to_string(),
            ]
        })
        .collect()
}

pub fn friendliness_rows(log: &MetricsLog) -> Vec<[String; 5]> {
    log.friendliness
        .iter()
        .map(|f| [f.t.to_string(), f.node.to_string(), f.peer.to_string(), f.kind.to_string(), f.delay.to_string()])
        .collect()
}

/// Writes the per-run files (`trajectory.csv`, `switching.csv`,
/// `friendliness.csv`) for one log.
pub fn write_csv(log: &MetricsLog, out_dir: &Path) -> Result<Vec<PathBuf>, MetricsError> {
    std::fs::create_dir_all(out_dir).map_err(|source| MetricsError::Io { path: out_dir.to_path_buf(), source })?;
    let files = [
        out_dir.join("trajectory.csv"),
        out_dir.join("switching.csv"),
        out_dir.join("friendliness.csv"),
    ];
    write_table(&files[0], &TRAJECTORY_HEADER, trajectory_rows(log))?;
    write_table(&files[1], &SWITCHING_HEADER, switching_rows(log))?;
    write_table(&files[2], &FRIENDLINESS_HEADER, friendliness_rows(log))?;
    Ok(files.to_vec())
}

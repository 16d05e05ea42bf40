//! Scenario configuration: defaults, a line-oriented `key = value` file
//! format with `[section]` headers, `section.key=value` overrides, and an
//! echo that parses back to the same values.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::channel::ChannelConfig;
use crate::geometry::ZoneConfig;

/// Largest beam count the energy sweep exercises.
pub const ENERGY_SWEEP_BEAMS: usize = 8;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("unknown key `{0}`")]
    UnknownOverride(String),
    #[error("invalid value for {key}: {reason}")]
    Invalid { key: String, reason: String },
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub area_side: f64,
    pub node_count: usize,
    pub malicious_count: usize,
    pub sectors: usize,
    pub duration: f64,
    pub sample_interval: f64,
    pub master_seed: u64,
    pub scenario: String,
    /// Seeds per sweep point in the multi-run scenarios.
    pub runs: usize,
    /// Distance within which an estimate counts as a successful sample.
    pub efficiency_tol: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            area_side: 400.0,
            node_count: 60,
            malicious_count: 4,
            sectors: 4,
            duration: 500.0,
            sample_interval: 5.0,
            master_seed: 1,
            scenario: "all".to_string(),
            runs: 50,
            efficiency_tol: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfvConfig {
    pub j_max: u32,
    pub reauth_interval: f64,
    pub rtt_bucket: f64,
    pub detection_keys: u32,
    pub p_wh: f64,
    pub p_i: f64,
    pub p_r: f64,
    /// Monte Carlo trials per detection grid point.
    pub trials: u64,
    pub scan_duration: f64,
    /// Added to the scan after a second consecutive re-auth failure.
    pub consecutive_penalty: f64,
}

impl Default for SfvConfig {
    fn default() -> Self {
        SfvConfig {
            j_max: 4,
            reauth_interval: 25.0,
            rtt_bucket: 1.0e-5,
            detection_keys: 4,
            p_wh: 0.1,
            p_i: 0.1,
            p_r: 0.1,
            trials: 100_000,
            scan_duration: 20.0,
            consecutive_penalty: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityConfig {
    pub v_min: f64,
    pub v_max: f64,
    /// Period of the mobility tick, seconds.
    pub step: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig { v_min: 1.0, v_max: 10.0, step: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioConfig {
    pub sim: SimConfig,
    pub channel: ChannelConfig,
    pub sfv: SfvConfig,
    pub zone: ZoneConfig,
    pub mobility: MobilityConfig,
}

fn parse_num<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>().map_err(|e| format!("{key}: cannot parse `{raw}`: {e}"))
}

enum SetError {
    UnknownKey,
    Bad(String),
}

impl ScenarioConfig {
    pub const SECTIONS: [&'static str; 5] = ["sim", "channel", "sfv", "zone", "mobility"];

    /// Sets `section.key` from its textual value.
    fn set(&mut self, section: &str, key: &str, raw: &str) -> Result<(), SetError> {
        let full = format!("{section}.{key}");
        let k = full.as_str();
        macro_rules! num {
            ($field:expr) => {{
                $field = parse_num(k, raw).map_err(SetError::Bad)?;
            }};
        }
        match (section, key) {
            ("sim", "area_side") => num!(self.sim.area_side),
            ("sim", "node_count") => num!(self.sim.node_count),
            ("sim", "malicious_count") => num!(self.sim.malicious_count),
            ("sim", "sectors") => num!(self.sim.sectors),
            ("sim", "duration") => num!(self.sim.duration),
            ("sim", "sample_interval") => num!(self.sim.sample_interval),
            ("sim", "master_seed") => num!(self.sim.master_seed),
            ("sim", "scenario") => self.sim.scenario = raw.to_string(),
            ("sim", "runs") => num!(self.sim.runs),
            ("sim", "efficiency_tol") => num!(self.sim.efficiency_tol),
            ("channel", "c") => num!(self.channel.c),
            ("channel", "range_limit") => num!(self.channel.range_limit),
            ("channel", "sigma_t") => num!(self.channel.sigma_t),
            ("channel", "e_total") => num!(self.channel.e_total),
            ("channel", "beta") => num!(self.channel.beta),
            ("channel", "turnaround") => num!(self.channel.turnaround),
            ("sfv", "j_max") => num!(self.sfv.j_max),
            ("sfv", "reauth_interval") => num!(self.sfv.reauth_interval),
            ("sfv", "rtt_bucket") => num!(self.sfv.rtt_bucket),
            ("sfv", "detection_keys") => num!(self.sfv.detection_keys),
            ("sfv", "p_wh") => num!(self.sfv.p_wh),
            ("sfv", "p_i") => num!(self.sfv.p_i),
            ("sfv", "p_r") => num!(self.sfv.p_r),
            ("sfv", "trials") => num!(self.sfv.trials),
            ("sfv", "scan_duration") => num!(self.sfv.scan_duration),
            ("sfv", "consecutive_penalty") => num!(self.sfv.consecutive_penalty),
            ("zone", "alpha") => num!(self.zone.alpha),
            ("zone", "rho_min") => num!(self.zone.rho_min),
            ("zone", "rho_max") => num!(self.zone.rho_max),
            ("zone", "eps_g") => num!(self.zone.eps_g),
            ("zone", "min_angle") => num!(self.zone.min_angle_deg),
            ("mobility", "v_min") => num!(self.mobility.v_min),
            ("mobility", "v_max") => num!(self.mobility.v_max),
            ("mobility", "step") => num!(self.mobility.step),
            _ => return Err(SetError::UnknownKey),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults. Does not validate.
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut section: Option<String> = None;
        for (i, raw_line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::Parse { line: line_no, message: "unterminated section header".into() })?
                    .trim();
                if !Self::SECTIONS.contains(&name) {
                    return Err(ConfigError::Parse { line: line_no, message: format!("unknown section [{name}]") });
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Parse { line: line_no, message: format!("expected `key = value`, got `{line}`") })?;
            let key = key.trim();
            let value = value.trim();
            let (sec, k) = match (&section, key.split_once('.')) {
                (_, Some((s, k))) => (s.to_string(), k.to_string()),
                (Some(s), None) => (s.clone(), key.to_string()),
                (None, None) => {
                    return Err(ConfigError::Parse { line: line_no, message: format!("key `{key}` outside any section") })
                }
            };
            match self.set(&sec, &k, value) {
                Ok(()) => {}
                Err(SetError::UnknownKey) => return Err(ConfigError::UnknownKey { line: line_no, key: format!("{sec}.{k}") }),
                Err(SetError::Bad(message)) => return Err(ConfigError::Parse { line: line_no, message }),
            }
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse_str(&text)
    }

    /// Applies a `section.key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Invalid { key: assignment.to_string(), reason: "expected section.key=value".into() })?;
        let key = key.trim();
        let (sec, k) = key
            .split_once('.')
            .ok_or_else(|| ConfigError::Invalid { key: key.to_string(), reason: "expected section.key".into() })?;
        match self.set(sec, k, value.trim()) {
            Ok(()) => Ok(()),
            Err(SetError::UnknownKey) => Err(ConfigError::UnknownOverride(key.to_string())),
            Err(SetError::Bad(reason)) => Err(ConfigError::Invalid { key: key.to_string(), reason }),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn bad(key: &str, reason: impl Into<String>) -> Result<(), ConfigError> {
            Err(ConfigError::Invalid { key: key.to_string(), reason: reason.into() })
        }
        fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                bad(key, format!("must be positive, got {v}"))
            }
        }
        fn non_negative(key: &str, v: f64) -> Result<(), ConfigError> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                bad(key, format!("must be non-negative, got {v}"))
            }
        }
        fn probability(key: &str, v: f64) -> Result<(), ConfigError> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                bad(key, format!("must be in [0,1], got {v}"))
            }
        }
        let s = &self.sim;
        positive("sim.area_side", s.area_side)?;
        positive("sim.duration", s.duration)?;
        positive("sim.sample_interval", s.sample_interval)?;
        positive("sim.efficiency_tol", s.efficiency_tol)?;
        if s.sample_interval > s.duration {
            return bad("sim.sample_interval", "exceeds sim.duration");
        }
        if s.sectors == 0 {
            return bad("sim.sectors", "must be at least 1");
        }
        if s.runs == 0 {
            return bad("sim.runs", "must be at least 1");
        }
        if s.node_count < s.malicious_count + 2 {
            return bad("sim.node_count", "needs at least two references besides the malicious nodes");
        }
        let c = &self.channel;
        positive("channel.c", c.c)?;
        positive("channel.range_limit", c.range_limit)?;
        non_negative("channel.sigma_t", c.sigma_t)?;
        positive("channel.e_total", c.e_total)?;
        non_negative("channel.beta", c.beta)?;
        non_negative("channel.turnaround", c.turnaround)?;
        let max_beams = s.sectors.max(ENERGY_SWEEP_BEAMS);
        if c.beta * (max_beams as f64 - 1.0) >= 1.0 {
            return bad("channel.beta", format!("beta * ({max_beams} - 1) must stay below 1"));
        }
        let f = &self.sfv;
        if f.j_max == 0 {
            return bad("sfv.j_max", "must be at least 1");
        }
        if f.detection_keys == 0 {
            return bad("sfv.detection_keys", "must be at least 1");
        }
        if f.trials == 0 {
            return bad("sfv.trials", "must be at least 1");
        }
        positive("sfv.reauth_interval", f.reauth_interval)?;
        positive("sfv.rtt_bucket", f.rtt_bucket)?;
        non_negative("sfv.scan_duration", f.scan_duration)?;
        non_negative("sfv.consecutive_penalty", f.consecutive_penalty)?;
        probability("sfv.p_wh", f.p_wh)?;
        probability("sfv.p_i", f.p_i)?;
        probability("sfv.p_r", f.p_r)?;
        let z = &self.zone;
        positive("zone.alpha", z.alpha)?;
        positive("zone.rho_min", z.rho_min)?;
        non_negative("zone.eps_g", z.eps_g)?;
        if z.rho_min > z.rho_max {
            return bad("zone.rho_min, zone.rho_max", format!("rho_min {} exceeds rho_max {}", z.rho_min, z.rho_max));
        }
        if !(0.0..90.0).contains(&z.min_angle_deg) {
            return bad("zone.min_angle", "must be in [0,90)");
        }
        let m = &self.mobility;
        non_negative("mobility.v_min", m.v_min)?;
        non_negative("mobility.v_max", m.v_max)?;
        positive("mobility.step", m.step)?;
        if m.v_min > m.v_max {
            return bad("mobility.v_min, mobility.v_max", format!("v_min {} exceeds v_max {}", m.v_min, m.v_max));
        }
        Ok(())
    }

    /// Effective config in the file format; parsing it reproduces `self`.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let s = &self.sim;
        let c = &self.channel;
        let f = &self.sfv;
        let z = &self.zone;
        let m = &self.mobility;
        let _ = writeln!(out, "[sim]");
        let _ = writeln!(out, "area_side = {}", s.area_side);
        let _ = writeln!(out, "node_count = {}", s.node_count);
        let _ = writeln!(out, "malicious_count = {}", s.malicious_count);
        let _ = writeln!(out, "sectors = {}", s.sectors);
        let _ = writeln!(out, "duration = {}", s.duration);
        let _ = writeln!(out, "sample_interval = {}", s.sample_interval);
        let _ = writeln!(out, "master_seed = {}", s.master_seed);
        let _ = writeln!(out, "scenario = {}", s.scenario);
        let _ = writeln!(out, "runs = {}", s.runs);
        let _ = writeln!(out, "efficiency_tol = {}", s.efficiency_tol);
        let _ = writeln!(out, "\n[channel]");
        let _ = writeln!(out, "c = {}", c.c);
        let _ = writeln!(out, "range_limit = {}", c.range_limit);
        let _ = writeln!(out, "sigma_t = {}", c.sigma_t);
        let _ = writeln!(out, "e_total = {}", c.e_total);
        let _ = writeln!(out, "beta = {}", c.beta);
        let _ = writeln!(out, "turnaround = {}", c.turnaround);
        let _ = writeln!(out, "\n[sfv]");
        let _ = writeln!(out, "j_max = {}", f.j_max);
        let _ = writeln!(out, "reauth_interval = {}", f.reauth_interval);
        let _ = writeln!(out, "rtt_bucket = {}", f.rtt_bucket);
        let _ = writeln!(out, "detection_keys = {}", f.detection_keys);
        let _ = writeln!(out, "p_wh = {}", f.p_wh);
        let _ = writeln!(out, "p_i = {}", f.p_i);
        let _ = writeln!(out, "p_r = {}", f.p_r);
        let _ = writeln!(out, "trials = {}", f.trials);
        let _ = writeln!(out, "scan_duration = {}", f.scan_duration);
        let _ = writeln!(out, "consecutive_penalty = {}", f.consecutive_penalty);
        let _ = writeln!(out, "\n[zone]");
        let _ = writeln!(out, "alpha = {}", z.alpha);
        let _ = writeln!(out, "rho_min = {}", z.rho_min);
        let _ = writeln!(out, "rho_max = {}", z.rho_max);
        let _ = writeln!(out, "eps_g = {}", z.eps_g);
        let _ = writeln!(out, "min_angle = {}", z.min_angle_deg);
        let _ = writeln!(out, "\n[mobility]");
        let _ = writeln!(out, "v_min = {}", m.v_min);
        let _ = writeln!(out, "v_max = {}", m.v_max);
        let _ = writeln!(out, "step = {}", m.step);
        out
    }
}

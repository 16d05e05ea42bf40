//! Propagation timing with Gaussian timestamp noise, a hard range cutoff,
//! and the received-energy model for multi-beam transmission.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geometry::Position;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("at least one active beam is required")]
    NoBeams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    /// Propagation speed, m/s.
    pub c: f64,
    pub range_limit: f64,
    /// Timestamp noise standard deviation, seconds.
    pub sigma_t: f64,
    pub e_total: f64,
    /// Inter-beam interference coefficient.
    pub beta: f64,
    /// Responder turnaround between reception and reply, seconds.
    pub turnaround: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            c: 3.0e8,
            range_limit: 250.0,
            sigma_t: 4.5e-9,
            e_total: 1.0,
            beta: 0.06,
            turnaround: 1.0e-3,
        }
    }
}

/// Arrival time at `rx` of a packet sent at `t_send`, or `None` beyond range.
pub fn propagate<R: Rng + ?Sized>(
    tx: Position,
    rx: Position,
    t_send: f64,
    cfg: &ChannelConfig,
    rng: &mut R,
) -> Option<f64> {
    let d = tx.distance(&rx);
    if d > cfg.range_limit {
        return None;
    }
    let noise = if cfg.sigma_t > 0.0 {
        Normal::new(0.0, cfg.sigma_t).expect("finite sigma").sample(rng)
    } else {
        0.0
    };
    Some(t_send + d / cfg.c + noise)
}

/// `E(m) = (E_total / m) * (1 - beta * (m - 1))`, floored at zero.
pub fn received_energy(cfg: &ChannelConfig, m_active_beams: usize) -> Result<f64, ChannelError> {
    if m_active_beams == 0 {
        return Err(ChannelError::NoBeams);
    }
    let m = m_active_beams as f64;
    Ok(((cfg.e_total / m) * (1.0 - cfg.beta * (m - 1.0))).max(0.0))
}

/// Timing-noise multiplier for the beam at `rank` (1-based activation
/// order) on a node: `sqrt(E(1) / E(rank))`.
pub fn noise_scale_for_rank(cfg: &ChannelConfig, rank: usize) -> f64 {
    let base = received_energy(cfg, 1).unwrap_or(0.0);
    match received_energy(cfg, rank.max(1)) {
        Ok(e) if e > 0.0 && base > 0.0 => (base / e).sqrt(),
        _ => f64::INFINITY,
    }
}

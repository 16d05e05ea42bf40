use std::fmt;

use crate::geometry::{Position, TrackingZone};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SwitchCause {
    OutOfRange,
    OutOfZone,
    FriendlinessLost,
    SectorContention,
}

impl fmt::Display for SwitchCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SwitchCause::OutOfRange => "out_of_range",
            SwitchCause::OutOfZone => "out_of_zone",
            SwitchCause::FriendlinessLost => "friendliness_lost",
            SwitchCause::SectorContention => "sector_contention",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub t: f64,
    pub position: Position,
    pub truth: Position,
    pub error: f64,
}

/// A reference replacement. `t` is when the cause was detected and
/// `delay` runs until tracking resumed (or the track was suspended, in
/// which case `new_ref` is `None`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchEvent {
    pub t: f64,
    pub target: u64,
    pub old_ref: u64,
    pub new_ref: Option<u64>,
    pub cause: SwitchCause,
    pub delay: f64,
}

/// Node indices and sectors of an active reference pair. `a` is the
/// primary reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefPair {
    pub a: usize,
    pub b: usize,
    pub sector_a: usize,
    pub sector_b: usize,
}

impl RefPair {
    pub fn uses(&self, node: usize) -> bool {
        self.a == node || self.b == node
    }

    pub fn same_nodes(&self, x: usize, y: usize) -> bool {
        (self.a == x && self.b == y) || (self.a == y && self.b == x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingSwitch {
    pub retained: usize,
    pub dropped: usize,
    pub cause: SwitchCause,
    pub trigger: f64,
    /// The retained node already scanned once for this switch.
    pub scanned: bool,
    /// Activation order of the retained reference's beam, kept across the switch.
    pub retained_seq: u64,
    /// Sector the retained reference keeps pointed at the target meanwhile.
    pub held_sector: Option<usize>,
    /// Pair being authenticated, once a candidate was found.
    pub candidate: Option<RefPair>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrackStatus {
    /// Not yet assigned, or suspended after a failed switch.
    Waiting { suspended: bool },
    Active(RefPair),
    Switching(PendingSwitch),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecord {
    /// Node index of the target.
    pub target: usize,
    pub target_id: u64,
    /// 1-based label used in reports.
    pub label: usize,
    pub status: TrackStatus,
    pub zone: Option<TrackingZone>,
    pub estimates: Vec<Estimate>,
    pub switches: Vec<SwitchEvent>,
    /// Fixes (or seeded positions) the predictor extrapolates from.
    pub history: Vec<(f64, Position)>,
    pub misses: u32,
    /// Bumped whenever the status changes, so stale events can be ignored.
    pub generation: u64,
}

impl TrackRecord {
    pub fn new(target: usize, target_id: u64, label: usize) -> Self {
        TrackRecord {
            target,
            target_id,
            label,
            status: TrackStatus::Waiting { suspended: false },
            zone: None,
            estimates: Vec::new(),
            switches: Vec::new(),
            history: Vec::new(),
            misses: 0,
            generation: 0,
        }
    }

    pub fn pair(&self) -> Option<RefPair> {
        match self.status {
            TrackStatus::Active(p) => Some(p),
            _ => None,
        }
    }

    pub fn is_waiting(&self) -> bool {
        matches!(self.status, TrackStatus::Waiting { .. })
    }

    /// Constant-velocity extrapolation from the last two history points.
    pub fn predict(&self, now: f64) -> Option<Position> {
        match self.history.as_slice() {
            [] => None,
            [.., (t, p)] if self.history.len() == 1 || now <= *t => Some(*p),
            [.., (t0, p0), (t1, p1)] => {
                let span = t1 - t0;
                if span <= 0.0 {
                    return Some(*p1);
                }
                let k = (now - t1) / span;
                Some(p1.offset((p1.x - p0.x) * k, (p1.y - p0.y) * k))
            }
            _ => unreachable!(),
        }
    }

    pub fn last_fix_time(&self) -> Option<f64> {
        self.history.last().map(|(t, _)| *t)
    }

    pub fn push_estimate(&mut self, e: Estimate) {
        debug_assert!(self.estimates.last().is_none_or(|l| l.t < e.t), "estimate times must increase");
        self.history.push((e.t, e.position));
        if self.history.len() > 2 {
            self.history.remove(0);
        }
        self.estimates.push(e);
    }
}

use crate::geometry::{sector_of, BeamAssignment, Position, SectorBeam};
use crate::mobility::MobilityState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    ClusterHead,
    FriendlyReference,
    MaliciousTarget,
}

/// A node's current belief about one peer. Timestamps are when the
/// belief was formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Friendliness {
    Unknown,
    Friendly(f64),
    Malicious(f64),
}

impl Friendliness {
    pub fn is_friendly(&self) -> bool {
        matches!(self, Friendliness::Friendly(_))
    }

    pub fn is_malicious(&self) -> bool {
        matches!(self, Friendliness::Malicious(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub index: usize,
    pub id: u64,
    pub role: Role,
    pub mobility: MobilityState,
    pub sectors: Vec<SectorBeam>,
    /// Activation sequence number per sector; orders the busy beams.
    pub activation: Vec<u64>,
    /// Belief about every node, indexed by node index.
    pub friendliness: Vec<Friendliness>,
    /// Absolute time the current scan ends.
    pub scan_until: f64,
    pub consecutive_failures: u32,
}

impl NodeState {
    pub fn new(index: usize, id: u64, role: Role, mobility: MobilityState, sectors: usize, node_count: usize) -> Self {
        NodeState {
            index,
            id,
            role,
            mobility,
            sectors: (0..sectors).map(|s| SectorBeam::idle(id, s, sectors)).collect(),
            activation: vec![0; sectors],
            friendliness: vec![Friendliness::Unknown; node_count],
            scan_until: f64::NEG_INFINITY,
            consecutive_failures: 0,
        }
    }

    pub fn position(&self) -> Position {
        self.mobility.position
    }

    pub fn is_scanning(&self, now: f64) -> bool {
        now < self.scan_until
    }

    /// Seconds of scan left at `now`.
    pub fn scan_timer(&self, now: f64) -> f64 {
        (self.scan_until - now).max(0.0)
    }

    pub fn sector_count(&self) -> usize {
        self.sectors.len()
    }

    pub fn sector_facing(&self, p: &Position) -> usize {
        sector_of(self.position().bearing_to(p), self.sectors.len())
    }

    pub fn busy_sectors(&self) -> usize {
        self.sectors.iter().filter(|s| !s.is_idle()).count()
    }

    pub fn occupy(&mut self, sector: usize, assignment: BeamAssignment, seq: u64) {
        debug_assert!(self.sectors[sector].is_idle(), "sector {sector} of node {} busy", self.index);
        self.sectors[sector].assignment = assignment;
        self.activation[sector] = seq;
    }

    pub fn release(&mut self, sector: usize) {
        let n = self.sectors.len();
        self.sectors[sector] = SectorBeam::idle(self.id, sector, n);
        self.activation[sector] = 0;
    }

    /// 1-based position of `sector` among this node's busy beams, in
    /// activation order.
    pub fn beam_rank(&self, sector: usize) -> usize {
        let own = self.activation[sector];
        1 + self
            .sectors
            .iter()
            .zip(&self.activation)
            .filter(|(b, &seq)| !b.is_idle() && seq < own)
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_follow_activation_order() {
        let mut n = NodeState::new(0, 9, Role::ClusterHead, MobilityState::stationary(Position::new(0.0, 0.0)), 4, 3);
        n.occupy(2, BeamAssignment::Tracking { target: 1, partner: 2 }, 5);
        n.occupy(0, BeamAssignment::Tracking { target: 1, partner: 2 }, 9);
        n.occupy(3, BeamAssignment::Authenticating { peer: 2 }, 7);
        assert_eq!(n.beam_rank(2), 1);
        assert_eq!(n.beam_rank(3), 2);
        assert_eq!(n.beam_rank(0), 3);
        n.release(2);
        assert_eq!(n.beam_rank(0), 2);
        assert_eq!(n.busy_sectors(), 2);
    }

    #[test]
    fn scan_timer_counts_down() {
        let mut n = NodeState::new(0, 1, Role::FriendlyReference, MobilityState::stationary(Position::new(0.0, 0.0)), 4, 1);
        assert!(!n.is_scanning(0.0));
        n.scan_until = 30.0;
        assert!(n.is_scanning(10.0));
        assert_eq!(n.scan_timer(10.0), 20.0);
        assert_eq!(n.scan_timer(40.0), 0.0);
    }
}

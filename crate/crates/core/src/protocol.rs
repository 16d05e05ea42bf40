//! Strict friendly verification: the challenge handshake between an
//! initiator and a candidate, and the detection-probability model.
//!
//! A session moves `PreambleSent → SeedsAgreed → Challenging(j) →
//! Verified | Rejected`. The initiator encrypts `j_max` challenge packets
//! with its key chain; an honest candidate rebuilds the chain from its own
//! view of the seeds and returns a digest of every decrypted packet.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::crypto::{self, EnsemblePacket, SeedPair, BLOCK_BYTES};
use crate::engine::NodeState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("probability {name} = {value} is outside [0,1]")]
    Probability { name: &'static str, value: f64 },
    #[error("at least one detection key is required")]
    NoDetectionKeys,
    #[error("at least one trial is required")]
    NoTrials,
    #[error("candidate is {distance:.1} m away, beyond the {limit} m radio range")]
    OutOfRange { distance: f64, limit: f64 },
    #[error("session is in state {0:?}, which does not allow this step")]
    BadState(SessionState),
}

/// Replay probabilities available to a dishonest candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdversaryModel {
    pub p_wh: f64,
    pub p_i: f64,
    pub p_r: f64,
}

impl AdversaryModel {
    pub fn new(p_wh: f64, p_i: f64, p_r: f64) -> Result<Self, ProtocolError> {
        for (name, value) in [("p_wh", p_wh), ("p_i", p_i), ("p_r", p_r)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ProtocolError::Probability { name, value });
            }
        }
        Ok(AdversaryModel { p_wh, p_i, p_r })
    }

    /// One key check: it detects only when none of the three replays works.
    fn key_detects<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        !rng.random_bool(self.p_wh) && !rng.random_bool(self.p_i) && !rng.random_bool(self.p_r)
    }
}

/// Per-key detection probability `(1-p_wh)(1-p_i)(1-p_r)`.
pub fn detection_single(adv: &AdversaryModel) -> f64 {
    (1.0 - adv.p_wh) * (1.0 - adv.p_i) * (1.0 - adv.p_r)
}

/// Detection rate with `n` keys: `1 - (1 - P)^n`.
pub fn detection_rate(adv: &AdversaryModel, n: u32) -> Result<f64, ProtocolError> {
    if n == 0 {
        return Err(ProtocolError::NoDetectionKeys);
    }
    let miss = 1.0 - detection_single(adv);
    Ok(1.0 - miss.powi(n as i32))
}

/// Empirical detection rate from simulated replay attempts.
pub fn monte_carlo_detection(adv: &AdversaryModel, n: u32, trials: u64, rng_seed: u64) -> Result<f64, ProtocolError> {
    if n == 0 {
        return Err(ProtocolError::NoDetectionKeys);
    }
    if trials == 0 {
        return Err(ProtocolError::NoTrials);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let detected = (0..trials).filter(|_| (0..n).any(|_| adv.key_detects(&mut rng))).count();
    Ok(detected as f64 / trials as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SessionState {
    PreambleSent,
    SeedsAgreed,
    Challenging(u32),
    Verified,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Friendly,
    Malicious,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationSession {
    pub initiator: u64,
    pub candidate: u64,
    /// Initiator's view of the seeds.
    pub seeds: SeedPair,
    /// Candidate's independently derived view of the seeds.
    pub candidate_seeds: SeedPair,
    /// Identity the candidate believes keys the chain.
    pub candidate_key_id: u64,
    pub j_max: u32,
    pub state: SessionState,
    pub started_at: f64,
    pub decided_at: Option<f64>,
}

impl VerificationSession {
    fn advance(&mut self, next: SessionState) {
        debug_assert!(next >= self.state, "{:?} -> {next:?}", self.state);
        self.state = next;
    }

    /// Records both parties' seed views after the symmetric RTT exchange.
    pub fn agree_seeds(
        &mut self,
        initiator_view: SeedPair,
        candidate_view: SeedPair,
        candidate_key_id: u64,
    ) -> Result<(), ProtocolError> {
        if self.state != SessionState::PreambleSent {
            return Err(ProtocolError::BadState(self.state));
        }
        self.seeds = initiator_view;
        self.candidate_seeds = candidate_view;
        self.candidate_key_id = candidate_key_id;
        self.advance(SessionState::SeedsAgreed);
        Ok(())
    }

    pub fn is_decided(&self) -> bool {
        matches!(self.state, SessionState::Verified | SessionState::Rejected)
    }
}

pub fn start_verification(
    initiator: &NodeState,
    candidate: &NodeState,
    now: f64,
    range_limit: f64,
    j_max: u32,
) -> Result<VerificationSession, ProtocolError> {
    let distance = initiator.position().distance(&candidate.position());
    if distance > range_limit {
        return Err(ProtocolError::OutOfRange { distance, limit: range_limit });
    }
    Ok(VerificationSession {
        initiator: initiator.id,
        candidate: candidate.id,
        seeds: SeedPair::default(),
        candidate_seeds: SeedPair::default(),
        candidate_key_id: initiator.id,
        j_max: j_max.max(1),
        state: SessionState::PreambleSent,
        started_at: now,
        decided_at: None,
    })
}

/// Runs the challenge phase and decides the session.
///
/// An honest candidate is verified exactly when every challenge packet it
/// decrypts matches. A dishonest candidate passes only if, for every one of
/// `detection_keys` independent key checks, at least one of its three
/// replays succeeds.
pub fn complete_verification(
    session: &mut VerificationSession,
    candidate_honest: bool,
    adversary: &AdversaryModel,
    detection_keys: u32,
    rng_seed: u64,
    decided_at: f64,
) -> Result<Verdict, ProtocolError> {
    if session.state != SessionState::SeedsAgreed {
        return Err(ProtocolError::BadState(session.state));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let passed = if candidate_honest {
        run_challenges(session, &mut rng)
    } else {
        let evaded = (0..detection_keys.max(1)).all(|_| !adversary.key_detects(&mut rng));
        if evaded {
            session.advance(SessionState::Challenging(session.j_max));
        }
        evaded
    };
    session.decided_at = Some(decided_at);
    if passed {
        session.advance(SessionState::Verified);
        Ok(Verdict::Friendly)
    } else {
        session.advance(SessionState::Rejected);
        Ok(Verdict::Malicious)
    }
}

fn run_challenges(session: &mut VerificationSession, rng: &mut ChaCha8Rng) -> bool {
    let packets: Vec<EnsemblePacket> = (1..=session.j_max)
        .map(|j| {
            let mut payload = vec![0u8; BLOCK_BYTES];
            rng.fill_bytes(&mut payload);
            EnsemblePacket { payload, index: j }
        })
        .collect();
    let Ok(ciphers) = crypto::encrypt_chain(&packets, session.seeds, session.initiator) else {
        return false;
    };
    let Ok(decrypted) = crypto::decrypt_chain(&ciphers, session.candidate_seeds, session.candidate_key_id) else {
        return false;
    };
    for (sent, got) in packets.iter().zip(&decrypted) {
        if crypto::xor_fold(&sent.payload) != crypto::xor_fold(&got.payload) {
            return false;
        }
        session.advance(SessionState::Challenging(sent.index));
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{NodeState, Role};
    use crate::geometry::Position;
    use crate::mobility::MobilityState;

    fn node(id: u64, x: f64) -> NodeState {
        NodeState::new(0, id, Role::FriendlyReference, MobilityState::stationary(Position::new(x, 0.0)), 4, 2)
    }

    fn agreed(seeds: SeedPair, view: SeedPair, key_id: u64) -> VerificationSession {
        let mut s = start_verification(&node(10, 0.0), &node(20, 100.0), 1.0, 250.0, 4).unwrap();
        s.agree_seeds(seeds, view, key_id).unwrap();
        s
    }

    fn adv(p: f64) -> AdversaryModel {
        AdversaryModel::new(p, p, p).unwrap()
    }

    #[test]
    fn single_and_rate_examples() {
        assert_eq!(detection_single(&adv(0.0)), 1.0);
        assert_eq!(detection_single(&AdversaryModel::new(1.0, 0.3, 0.7).unwrap()), 0.0);
        assert_eq!(detection_single(&adv(0.5)), 0.125);
        assert_eq!(detection_rate(&adv(0.5), 2).unwrap(), 0.234375);
        assert!((detection_rate(&adv(0.3), 1).unwrap() - detection_single(&adv(0.3))).abs() < 1e-15);
        assert_eq!(detection_rate(&adv(0.0), 7).unwrap(), 1.0);
        assert_eq!(detection_rate(&adv(0.5), 0), Err(ProtocolError::NoDetectionKeys));
    }

    #[test]
    fn probabilities_validated() {
        assert!(matches!(AdversaryModel::new(0.0, 1.2, 0.0), Err(ProtocolError::Probability { name: "p_i", .. })));
        assert!(AdversaryModel::new(-0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn monte_carlo_extremes() {
        assert_eq!(monte_carlo_detection(&adv(0.0), 1, 100, 1).unwrap(), 1.0);
        assert_eq!(monte_carlo_detection(&adv(1.0), 5, 100, 1).unwrap(), 0.0);
        assert_eq!(monte_carlo_detection(&adv(0.5), 2, 0, 1), Err(ProtocolError::NoTrials));
    }

    #[test]
    fn monte_carlo_tracks_closed_form() {
        let mc = monte_carlo_detection(&adv(0.5), 2, 100_000, 42).unwrap();
        assert!((mc - 0.234375).abs() < 0.01, "{mc}");
    }

    #[test]
    fn out_of_range_candidate() {
        let r = start_verification(&node(1, 0.0), &node(2, 300.0), 0.0, 250.0, 4);
        assert!(matches!(r, Err(ProtocolError::OutOfRange { .. })));
    }

    #[test]
    fn sessions_are_independent() {
        let a = node(1, 0.0);
        let s1 = start_verification(&a, &node(2, 10.0), 0.0, 250.0, 4).unwrap();
        let mut s2 = start_verification(&a, &node(3, 20.0), 0.0, 250.0, 4).unwrap();
        s2.agree_seeds(SeedPair::new(1, 1), SeedPair::new(1, 1), 1).unwrap();
        assert_eq!(s1.state, SessionState::PreambleSent);
        assert_eq!(s1.candidate, 2);
        assert_eq!(s2.state, SessionState::SeedsAgreed);
    }

    #[test]
    fn honest_candidate_verified() {
        let seeds = SeedPair::new(0x2D_0000_0064, 100);
        let mut s = agreed(seeds, seeds, 10);
        let v = complete_verification(&mut s, true, &adv(0.0), 4, 9, 1.5).unwrap();
        assert_eq!(v, Verdict::Friendly);
        assert_eq!(s.state, SessionState::Verified);
        assert_eq!(s.decided_at, Some(1.5));
    }

    #[test]
    fn wrong_seed_or_identity_rejected() {
        let seeds = SeedPair::new(0x2D_0000_0064, 100);
        for (view, key_id) in [
            (SeedPair::new(seeds.loc_seed, 101), 10),
            (SeedPair::new(seeds.loc_seed ^ 1, 100), 10),
            (SeedPair::new(seeds.loc_seed ^ (1 << 32), 100), 10),
            (seeds, 11),
        ] {
            let mut s = agreed(seeds, view, key_id);
            assert_eq!(complete_verification(&mut s, true, &adv(0.0), 4, 3, 2.0).unwrap(), Verdict::Malicious);
            assert_eq!(s.state, SessionState::Rejected);
        }
    }

    #[test]
    fn dishonest_extremes() {
        let seeds = SeedPair::new(5, 5);
        for seed in 0..50 {
            let mut s = agreed(seeds, seeds, 10);
            assert_eq!(complete_verification(&mut s, false, &adv(0.0), 1, seed, 0.0).unwrap(), Verdict::Malicious);
            let mut s = agreed(seeds, seeds, 10);
            assert_eq!(complete_verification(&mut s, false, &adv(1.0), 8, seed, 0.0).unwrap(), Verdict::Friendly);
        }
    }

    #[test]
    fn verdict_requires_agreed_seeds() {
        let mut s = start_verification(&node(1, 0.0), &node(2, 10.0), 0.0, 250.0, 4).unwrap();
        assert!(matches!(
            complete_verification(&mut s, true, &adv(0.0), 1, 0, 0.0),
            Err(ProtocolError::BadState(SessionState::PreambleSent))
        ));
    }

    #[test]
    fn rate_monotone_on_grid() {
        let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
        for &a in &grid {
            for &b in &grid {
                for &c in &grid {
                    let m = AdversaryModel::new(a, b, c).unwrap();
                    let rates: Vec<f64> = [1, 2, 4, 8].iter().map(|&n| detection_rate(&m, n).unwrap()).collect();
                    assert!(rates.windows(2).all(|w| w[0] <= w[1]));
                    if a < 1.0 {
                        let more = AdversaryModel::new(a + 0.25, b, c).unwrap();
                        assert!(detection_rate(&more, 4).unwrap() <= rates[2]);
                    }
                }
            }
        }
    }
}

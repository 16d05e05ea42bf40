//! Discrete-event simulation of a cluster: periodic verification sweeps,
//! detection of malicious nodes, sector assignment, the tracking cycle and
//! reference switching.
//!
//! One master seed feeds every random stream through `derive_seed`, and
//! equal-time events run in insertion order, so a config and seed fully
//! determine the run.

mod node;
mod queue;
mod track;

pub use node::{Friendliness, NodeState, Role};
pub use queue::{Event, EventQueue};
pub use track::{Estimate, PendingSwitch, RefPair, SwitchCause, SwitchEvent, TrackRecord, TrackStatus};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{noise_scale_for_rank, propagate, ChannelConfig};
use crate::config::{ConfigError, ScenarioConfig};
use crate::crypto::{derive_seed, SeedPair};
use crate::geometry::{
    angle_between, form_zone, range_from_timestamps, triangulate, BeamAssignment, GeometryError, Position,
    RangeMeasurement, TrackingZone,
};
use crate::metrics::{
    ContentionEvent, FriendlinessEvent, FriendlinessEventKind, MetricsLog, TargetLog,
};
use crate::mobility::{MobilityState, Region};
use crate::protocol::{complete_verification, start_verification, AdversaryModel, Verdict};

const TAG_NODE_ID: u64 = 0x1000;
const TAG_MOBILITY: u64 = 0x2000;
const TAG_CHANNEL: u64 = 0x3000;
const TAG_SFV: u64 = 0x3001;
const TAG_LAYOUT: u64 = 0x3002;

/// First verification sweeps are spread over this many seconds.
const REAUTH_PHASE_SPREAD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct NodePlacement {
    pub role: Role,
    pub mobility: MobilityState,
}

/// How nodes are placed and moved. Node 0 is the cluster head and nodes
/// `1..=malicious_count` are the malicious targets in every generated layout.
#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    /// Everyone moves by random waypoint over the whole area.
    Random,
    /// A static cluster head at the centre; target `k` roams the box of
    /// quadrant `(k - 1) % 4`, so it sits in the head's sector `k`.
    Hub,
    /// Targets on parallel lanes at the top speed; references roam.
    Trajectory,
    Custom(Vec<NodePlacement>),
}

/// Forces the re-auth exchange between a track's primary reference and its
/// partner to fail, at the primary's first sweep at or after `at`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Injection {
    pub at: f64,
    pub label: usize,
}

/// One isolated failure around 100 s, then two consecutive ones from 300 s.
pub const FRIENDLINESS_INJECTIONS: [Injection; 3] = [
    Injection { at: 100.0, label: 1 },
    Injection { at: 300.0, label: 1 },
    Injection { at: 300.0, label: 1 },
];

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub layout: Layout,
    pub injections: Vec<Injection>,
    /// Prefer the cluster head as primary reference and assign in label order.
    pub hub_first: bool,
}

impl SimOptions {
    pub fn for_scenario(name: &str) -> Self {
        match name {
            "multi-target" => SimOptions { layout: Layout::Hub, injections: Vec::new(), hub_first: true },
            "friendliness" => {
                SimOptions { layout: Layout::Hub, injections: FRIENDLINESS_INJECTIONS.to_vec(), hub_first: true }
            }
            "trajectory" => SimOptions { layout: Layout::Trajectory, injections: Vec::new(), hub_first: false },
            _ => SimOptions { layout: Layout::Random, injections: Vec::new(), hub_first: false },
        }
    }
}

/// Runs the layout implied by `cfg.sim.scenario` to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<MetricsLog, ConfigError> {
    Ok(Simulation::new(cfg.clone(), SimOptions::for_scenario(&cfg.sim.scenario))?.run())
}

fn hub_box(k: usize, area: f64) -> Region {
    let c = area / 2.0;
    let (lo, hi) = (0.05 * area, 0.4375 * area);
    let (sx, sy) = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)][k % 4];
    let xs = [c + sx * lo, c + sx * hi];
    let ys = [c + sy * lo, c + sy * hi];
    Region {
        min: Position::new(xs[0].min(xs[1]), ys[0].min(ys[1])),
        max: Position::new(xs[0].max(xs[1]), ys[0].max(ys[1])),
    }
}

fn placements(cfg: &ScenarioConfig, layout: &Layout, rng: &mut ChaCha8Rng) -> Vec<NodePlacement> {
    let s = &cfg.sim;
    let m = &cfg.mobility;
    let area = Region::square(s.area_side);
    let centre = Position::new(s.area_side / 2.0, s.area_side / 2.0);
    let roam = |rng: &mut ChaCha8Rng| {
        let start = area.sample(rng);
        MobilityState::random_waypoint(start, m.v_min, m.v_max, area, rng)
    };
    (0..s.node_count)
        .map(|i| {
            let role = if i == 0 {
                Role::ClusterHead
            } else if i <= s.malicious_count {
                Role::MaliciousTarget
            } else {
                Role::FriendlyReference
            };
            let mobility = match (layout, role) {
                (Layout::Hub, Role::ClusterHead) | (Layout::Trajectory, Role::ClusterHead) => {
                    MobilityState::stationary(centre)
                }
                (Layout::Hub, Role::MaliciousTarget) => {
                    let region = hub_box(i - 1, s.area_side);
                    let start = region.sample(rng);
                    MobilityState::random_waypoint(start, m.v_min, m.v_max, region, rng)
                }
                (Layout::Trajectory, Role::MaliciousTarget) => MobilityState::parallel_lane(
                    Position::new(0.1 * s.area_side, 0.35 * s.area_side),
                    i - 1,
                    0.1 * s.area_side,
                    0.0,
                    m.v_max,
                ),
                _ => roam(rng),
            };
            NodePlacement { role, mobility }
        })
        .collect()
}

fn mix(digest: u64, time: f64, code: u64) -> u64 {
    derive_seed(digest ^ time.to_bits(), code)
}

pub struct Simulation {
    cfg: ScenarioConfig,
    opts: SimOptions,
    nodes: Vec<NodeState>,
    mobility_rngs: Vec<ChaCha8Rng>,
    channel_rng: ChaCha8Rng,
    sfv_rng: ChaCha8Rng,
    adversary: AdversaryModel,
    queue: EventQueue,
    now: f64,
    moved_to: f64,
    tick: u64,
    tracks: Vec<TrackRecord>,
    /// Track index per node, for detected nodes.
    track_of: Vec<Option<usize>>,
    detected: Vec<bool>,
    /// Ground truth per node at each scheduled sample, kept for targets.
    truth: Vec<Vec<(f64, Position)>>,
    pending_injections: Vec<Injection>,
    activation_seq: u64,
    log: MetricsLog,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig, opts: SimOptions) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let master = cfg.sim.master_seed;
        let mut layout_rng = ChaCha8Rng::seed_from_u64(derive_seed(master, TAG_LAYOUT));
        let placed = match &opts.layout {
            Layout::Custom(p) => {
                if p.len() < 2 {
                    return Err(ConfigError::Invalid {
                        key: "sim.node_count".into(),
                        reason: "a custom layout needs at least two nodes".into(),
                    });
                }
                p.clone()
            }
            other => placements(&cfg, other, &mut layout_rng),
        };
        let n = placed.len();
        let sectors = cfg.sim.sectors;
        let nodes: Vec<NodeState> = placed
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let id = derive_seed(master, TAG_NODE_ID + i as u64);
                NodeState::new(i, id, p.role, p.mobility, sectors, n)
            })
            .collect();
        let mobility_rngs =
            (0..n).map(|i| ChaCha8Rng::seed_from_u64(derive_seed(master, TAG_MOBILITY + i as u64))).collect();
        let adversary = AdversaryModel::new(cfg.sfv.p_wh, cfg.sfv.p_i, cfg.sfv.p_r)
            .map_err(|e| ConfigError::Invalid { key: "sfv".into(), reason: e.to_string() })?;

        let mut queue = EventQueue::new();
        queue.push(cfg.mobility.step.min(cfg.sim.duration), Event::MobilityTick);
        queue.push(cfg.sim.sample_interval, Event::TrackingTick);
        for node in &nodes {
            if node.role != Role::MaliciousTarget {
                let phase = layout_rng.random::<f64>() * REAUTH_PHASE_SPREAD;
                queue.push(phase, Event::ReauthTick(node.index));
            }
        }

        let mut injections = opts.injections.clone();
        injections.sort_by(|a, b| a.at.total_cmp(&b.at));
        let log = MetricsLog {
            scenario: cfg.sim.scenario.clone(),
            master_seed: master,
            config_echo: cfg.echo(),
            ..MetricsLog::default()
        };
        Ok(Simulation {
            channel_rng: ChaCha8Rng::seed_from_u64(derive_seed(master, TAG_CHANNEL)),
            sfv_rng: ChaCha8Rng::seed_from_u64(derive_seed(master, TAG_SFV)),
            adversary,
            queue,
            now: 0.0,
            moved_to: 0.0,
            tick: 0,
            tracks: Vec::new(),
            track_of: vec![None; n],
            detected: vec![false; n],
            truth: vec![Vec::new(); n],
            pending_injections: injections,
            activation_seq: 0,
            log,
            mobility_rngs,
            nodes,
            opts,
            cfg,
        })
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn tracks(&self) -> &[TrackRecord] {
        &self.tracks
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn log(&self) -> &MetricsLog {
        &self.log
    }

    pub fn is_detected(&self, node: usize) -> bool {
        self.detected[node]
    }

    /// Dispatches every event due at or before `until`.
    pub fn run_until(&mut self, until: f64) {
        let end = until.min(self.cfg.sim.duration);
        while let Some(t) = self.queue.peek_time() {
            if t > end {
                break;
            }
            let (t, event) = self.queue.pop().expect("peeked");
            debug_assert!(t >= self.now, "time went backwards: {t} < {}", self.now);
            self.now = t;
            self.advance_mobility(t);
            self.log.events_dispatched += 1;
            self.log.trace_digest = mix(self.log.trace_digest, t, event.code());
            self.dispatch(event);
        }
    }

    pub fn run(mut self) -> MetricsLog {
        self.run_until(self.cfg.sim.duration);
        self.finish()
    }

    pub fn finish(mut self) -> MetricsLog {
        let mut targets = Vec::new();
        let mut label = 0;
        for node in &self.nodes {
            if node.role != Role::MaliciousTarget {
                continue;
            }
            label += 1;
            let estimates = self.track_of[node.index].map(|t| self.tracks[t].estimates.clone()).unwrap_or_default();
            targets.push(TargetLog {
                target: node.id,
                label,
                truth: std::mem::take(&mut self.truth[node.index]),
                estimates,
            });
        }
        self.log.targets = targets;
        self.log
    }

    fn dispatch(&mut self, event: Event) {
        match event {
            Event::MobilityTick => {
                let next = self.now + self.cfg.mobility.step;
                if next <= self.cfg.sim.duration {
                    self.queue.push(next, Event::MobilityTick);
                }
            }
            Event::TrackingTick => self.on_tracking_tick(),
            Event::ReauthTick(i) => {
                self.reauthentication_tick(i, false);
                self.queue.push(self.now + self.cfg.sfv.reauth_interval, Event::ReauthTick(i));
            }
            Event::ScanComplete(i) => {
                if !self.nodes[i].is_scanning(self.now) {
                    self.reauthentication_tick(i, true);
                }
            }
            Event::ResumeSwitch { track, generation } => {
                if self.tracks[track].generation == generation {
                    self.switch_reference(track);
                }
            }
            Event::SwitchComplete { track, generation } => {
                if self.tracks[track].generation == generation {
                    self.complete_switch(track);
                }
            }
        }
    }

    fn advance_mobility(&mut self, t: f64) {
        let dt = t - self.moved_to;
        if dt <= 0.0 {
            return;
        }
        let area = self.cfg.sim.area_side;
        for (node, rng) in self.nodes.iter_mut().zip(self.mobility_rngs.iter_mut()) {
            node.mobility = node.mobility.step(dt, area, rng);
        }
        self.moved_to = t;
    }

    fn next_seq(&mut self) -> u64 {
        self.activation_seq += 1;
        self.activation_seq
    }

    fn friendly_event(&mut self, node: usize, peer: usize, kind: FriendlinessEventKind, delay: f64) {
        self.log.friendliness.push(FriendlinessEvent {
            t: self.now,
            node: self.nodes[node].id,
            peer: self.nodes[peer].id,
            kind,
            delay,
        });
    }

    fn mutually_friendly(&self, a: usize, b: usize) -> bool {
        self.nodes[a].friendliness[b].is_friendly() && self.nodes[b].friendliness[a].is_friendly()
    }

    /// Round trip `a → b → a` with the responder's turnaround. Exchanges
    /// are stamped on a clock local to the exchange, which keeps
    /// nanosecond flight times exact late in a run.
    fn round_trip(&mut self, a: Position, b: Position) -> Option<f64> {
        let ch = self.cfg.channel;
        let arrive = propagate(a, b, 0.0, &ch, &mut self.channel_rng)?;
        propagate(b, a, arrive + ch.turnaround, &ch, &mut self.channel_rng)
    }

    /// Both parties' seed views: shared distance and initiator-to-candidate
    /// bearing, each with its own RTT measurement.
    fn measure_seeds(&mut self, i: usize, j: usize) -> Option<(SeedPair, SeedPair)> {
        let (pi, pj) = (self.nodes[i].position(), self.nodes[j].position());
        let d = pi.distance(&pj);
        let bearing = pi.bearing_to(&pj);
        let rtt_i = self.round_trip(pi, pj)?;
        let rtt_j = self.round_trip(pj, pi)?;
        let bucket = self.cfg.sfv.rtt_bucket;
        Some((SeedPair::quantize(d, bearing, rtt_i, bucket), SeedPair::quantize(d, bearing, rtt_j, bucket)))
    }

    /// One SFV session from `i` to `j`; `None` when the peer is unreachable.
    fn verify(&mut self, i: usize, j: usize, inject: bool) -> Option<Verdict> {
        let sfv = &self.cfg.sfv;
        let (range, j_max, keys) = (self.cfg.channel.range_limit, sfv.j_max, sfv.detection_keys);
        let mut session = start_verification(&self.nodes[i], &self.nodes[j], self.now, range, j_max).ok()?;
        let (mine, mut theirs) = self.measure_seeds(i, j)?;
        if inject {
            theirs.rtt_seed = theirs.rtt_seed.wrapping_add(1);
        }
        session.agree_seeds(mine, theirs, self.nodes[i].id).ok()?;
        let honest = self.nodes[j].role != Role::MaliciousTarget;
        let seed = self.sfv_rng.next_u64();
        let verdict = complete_verification(&mut session, honest, &self.adversary, keys, seed, self.now).ok()?;
        match verdict {
            Verdict::Friendly => self.log.verdicts.friendly += 1,
            Verdict::Malicious => self.log.verdicts.malicious += 1,
        }
        Some(verdict)
    }

    /// Peer whose exchange with `i` should fail at this sweep, if any.
    fn take_injection(&mut self, i: usize) -> Option<usize> {
        let now = self.now;
        let pos = self.pending_injections.iter().position(|inj| {
            inj.at <= now
                && self.tracks.iter().any(|t| t.label == inj.label && t.pair().is_some_and(|p| p.a == i))
        })?;
        let inj = self.pending_injections.remove(pos);
        let pair = self.tracks.iter().find(|t| t.label == inj.label).and_then(|t| t.pair())?;
        Some(pair.b)
    }

    /// Verifies every reachable peer of `i`. A periodic sweep (not a scan
    /// completion) also updates the failure streak and may start a scan.
    pub fn reauthentication_tick(&mut self, i: usize, after_scan: bool) {
        if self.nodes[i].role == Role::MaliciousTarget {
            return;
        }
        let inject_peer = if after_scan { None } else { self.take_injection(i) };
        let mut failed = Vec::new();
        let mut successes = 0u32;
        for j in 0..self.nodes.len() {
            if j == i || self.detected[j] || self.nodes[i].friendliness[j].is_malicious() {
                continue;
            }
            let was_friendly = self.nodes[i].friendliness[j].is_friendly();
            let inject = inject_peer == Some(j) && was_friendly;
            let Some(verdict) = self.verify(i, j, inject) else { continue };
            match verdict {
                Verdict::Friendly => {
                    successes += 1;
                    if !was_friendly {
                        self.nodes[i].friendliness[j] = Friendliness::Friendly(self.now);
                        self.nodes[j].friendliness[i] = Friendliness::Friendly(self.now);
                        self.friendly_event(i, j, FriendlinessEventKind::Friendly, 0.0);
                    }
                }
                Verdict::Malicious if was_friendly => {
                    self.nodes[i].friendliness[j] = Friendliness::Unknown;
                    self.nodes[j].friendliness[i] = Friendliness::Unknown;
                    self.friendly_event(i, j, FriendlinessEventKind::ReauthFail, 0.0);
                    failed.push(j);
                }
                Verdict::Malicious => self.mark_malicious(j, i),
            }
        }
        if !after_scan {
            if !failed.is_empty() {
                let node = &mut self.nodes[i];
                node.consecutive_failures += 1;
                let mut scan = self.cfg.sfv.scan_duration;
                if node.consecutive_failures >= 2 {
                    scan += self.cfg.sfv.consecutive_penalty;
                }
                self.start_scan(i, scan);
            } else if successes > 0 {
                self.nodes[i].consecutive_failures = 0;
            }
        }
        for j in failed {
            self.friendliness_lost(i, j);
        }
    }

    fn start_scan(&mut self, i: usize, duration: f64) {
        let until = self.now + duration;
        if until > self.nodes[i].scan_until {
            self.nodes[i].scan_until = until;
        }
        self.friendly_event(i, i, FriendlinessEventKind::ScanStart, duration);
        self.queue.push(until, Event::ScanComplete(i));
    }

    fn mark_malicious(&mut self, j: usize, by: usize) {
        self.nodes[by].friendliness[j] = Friendliness::Malicious(self.now);
        if self.detected[j] {
            return;
        }
        self.detected[j] = true;
        self.friendly_event(by, j, FriendlinessEventKind::Malicious, 0.0);
        for k in 0..self.nodes.len() {
            if k != j {
                self.nodes[k].friendliness[j] = Friendliness::Malicious(self.now);
            }
        }
        // a node that slipped through as a reference is dropped from its tracks
        for t in 0..self.tracks.len() {
            if let Some(p) = self.tracks[t].pair() {
                if p.uses(j) {
                    let keep = if p.a == j { p.b } else { p.a };
                    self.begin_switch(t, SwitchCause::FriendlinessLost, keep, j);
                }
            }
        }
        let label = self.nodes[..=j].iter().filter(|n| n.role == Role::MaliciousTarget).count().max(1);
        self.track_of[j] = Some(self.tracks.len());
        self.tracks.push(TrackRecord::new(j, self.nodes[j].id, label));
    }

    fn friendliness_lost(&mut self, i: usize, j: usize) {
        for t in 0..self.tracks.len() {
            match self.tracks[t].status {
                TrackStatus::Active(p) if p.same_nodes(i, j) => {
                    self.begin_switch(t, SwitchCause::FriendlinessLost, i, j);
                }
                TrackStatus::Switching(mut ps) if ps.candidate.is_some_and(|c| c.same_nodes(i, j)) => {
                    let c = ps.candidate.take().expect("checked");
                    self.release_pair(&c);
                    self.tracks[t].status = TrackStatus::Switching(ps);
                    self.tracks[t].generation += 1;
                    let at = self.now.max(self.nodes[ps.retained].scan_until);
                    let generation = self.tracks[t].generation;
                    self.queue.push(at, Event::ResumeSwitch { track: t, generation });
                }
                _ => {}
            }
        }
    }

    fn release_pair(&mut self, p: &RefPair) {
        self.nodes[p.a].release(p.sector_a);
        self.nodes[p.b].release(p.sector_b);
    }

    fn pair_in_use(&self, a: usize, b: usize) -> bool {
        self.tracks.iter().any(|t| match t.status {
            TrackStatus::Active(p) => p.same_nodes(a, b),
            TrackStatus::Switching(ps) => ps.candidate.is_some_and(|c| c.same_nodes(a, b)),
            TrackStatus::Waiting { .. } => false,
        })
    }

    fn usable_reference(&self, k: usize, target: usize) -> bool {
        let node = &self.nodes[k];
        k != target
            && !self.detected[k]
            && node.role != Role::MaliciousTarget
            && !node.is_scanning(self.now)
            && node.position().distance(&self.nodes[target].position()) <= self.cfg.channel.range_limit
    }

    /// Where `observer` places `target` from a verification exchange:
    /// distance rounded to metres, bearing to degrees.
    fn located_by(&self, observer: usize, target: usize) -> Position {
        let o = self.nodes[observer].position();
        let t = self.nodes[target].position();
        let d = o.distance(&t).round();
        let b = o.bearing_to(&t).round().to_radians();
        o.offset(d * b.cos(), d * b.sin())
    }

    /// Greedy choice of a reference pair for `target` around `est` (or the
    /// primary's own located view when `est` is `None`).
    fn find_pair(
        &mut self,
        target: usize,
        retained: Option<usize>,
        exclude: Option<usize>,
        est: Option<Position>,
        held: Option<(usize, usize)>,
    ) -> Option<(RefPair, Position)> {
        let n = self.nodes.len();
        let free = |nodes: &[NodeState], k: usize, s: usize| nodes[k].sectors[s].is_idle() || held == Some((k, s));
        let tpos = self.nodes[target].position();
        let usable: Vec<usize> = (0..n).filter(|&k| self.usable_reference(k, target)).collect();
        let by_distance = |p: &Position, list: &[usize], nodes: &[NodeState]| {
            let mut v: Vec<(f64, u64, usize)> =
                list.iter().map(|&k| (nodes[k].position().distance(p), nodes[k].id, k)).collect();
            v.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            v.into_iter().map(|(_, _, k)| k).collect::<Vec<_>>()
        };
        let primaries: Vec<usize> = match retained {
            Some(r) if usable.contains(&r) => vec![r],
            Some(_) => return None,
            None => {
                let mut v = by_distance(&est.unwrap_or(tpos), &usable, &self.nodes);
                if self.opts.hub_first {
                    if let Some(pos) = v.iter().position(|&k| self.nodes[k].role == Role::ClusterHead) {
                        let hub = v.remove(pos);
                        v.insert(0, hub);
                    }
                }
                v
            }
        };
        let range = self.cfg.channel.range_limit;
        let min_angle = self.cfg.zone.min_angle_deg;
        // a reference closer than one interval of target travel would see
        // its bearing swing too far between samples
        let standoff = self.cfg.mobility.v_max * self.cfg.sim.sample_interval;
        let hub_first = self.opts.hub_first;
        let far_enough = |nodes: &[NodeState], k: usize, p: &Position| {
            (hub_first && nodes[k].role == Role::ClusterHead) || nodes[k].position().distance(p) >= standoff
        };
        for a in primaries {
            let guess = est.unwrap_or_else(|| self.located_by(a, target));
            if Some(a) == exclude || (retained != Some(a) && !far_enough(&self.nodes, a, &guess)) {
                continue;
            }
            let sa = self.nodes[a].sector_facing(&guess);
            if !free(&self.nodes, a, sa) {
                self.log.contentions.push(ContentionEvent {
                    t: self.now,
                    node: self.nodes[a].id,
                    target: self.nodes[target].id,
                    sector: sa,
                });
                continue;
            }
            let pa = self.nodes[a].position();
            for b in by_distance(&guess, &usable, &self.nodes) {
                if b == a || Some(b) == exclude || !self.mutually_friendly(a, b) || !far_enough(&self.nodes, b, &guess) {
                    continue;
                }
                let pb = self.nodes[b].position();
                if pa.distance(&pb) > range {
                    continue;
                }
                let sb = self.nodes[b].sector_facing(&guess);
                if !free(&self.nodes, b, sb) {
                    continue;
                }
                let spread = angle_between(guess.bearing_to(&pa), guess.bearing_to(&pb));
                if spread < min_angle || spread > 180.0 - min_angle {
                    continue;
                }
                if self.pair_in_use(a, b) {
                    continue;
                }
                return Some((RefPair { a, b, sector_a: sa, sector_b: sb }, guess));
            }
        }
        None
    }

    fn occupy_pair(&mut self, track: usize, p: &RefPair, tracking: bool, retained: Option<(usize, u64)>) {
        let target = self.tracks[track].target;
        for (node, sector, other) in [(p.a, p.sector_a, p.b), (p.b, p.sector_b, p.a)] {
            let seq = match retained {
                Some((r, seq)) if r == node && seq > 0 => seq,
                _ => self.next_seq(),
            };
            let assignment = if tracking {
                BeamAssignment::Tracking { target, partner: other }
            } else {
                BeamAssignment::Authenticating { peer: other }
            };
            self.nodes[node].occupy(sector, assignment, seq);
        }
    }

    /// Pairs waiting targets with references; never counts as a switch.
    pub fn assign_targets(&mut self) {
        let mut waiting: Vec<usize> = (0..self.tracks.len()).filter(|&t| self.tracks[t].is_waiting()).collect();
        if self.opts.hub_first {
            waiting.sort_by_key(|&t| (self.tracks[t].label, self.tracks[t].target_id));
        } else {
            let key = |t: usize| {
                let target = self.tracks[t].target;
                let tp = self.nodes[target].position();
                let nearest = (0..self.nodes.len())
                    .filter(|&k| self.usable_reference(k, target))
                    .map(|k| self.nodes[k].position().distance(&tp))
                    .fold(f64::INFINITY, f64::min);
                (nearest, self.tracks[t].target_id)
            };
            let mut keyed: Vec<(f64, u64, usize)> = waiting.iter().map(|&t| (key(t).0, key(t).1, t)).collect();
            keyed.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            waiting = keyed.into_iter().map(|(_, _, t)| t).collect();
        }
        for t in waiting {
            let target = self.tracks[t].target;
            if let Some((pair, seed)) = self.find_pair(target, None, None, None, None) {
                self.occupy_pair(t, &pair, true, None);
                let track = &mut self.tracks[t];
                track.status = TrackStatus::Active(pair);
                track.generation += 1;
                track.misses = 0;
                track.history = vec![(self.now, seed)];
            }
        }
    }

    fn on_tracking_tick(&mut self) {
        self.tick += 1;
        for node in &self.nodes {
            if node.role == Role::MaliciousTarget {
                self.truth[node.index].push((self.now, node.position()));
            }
        }
        self.log.schedule.push(self.now);
        self.assign_targets();
        for t in 0..self.tracks.len() {
            if self.tracks[t].pair().is_some() {
                self.tracking_tick(t);
            }
        }
        let next = (self.tick + 1) as f64 * self.cfg.sim.sample_interval;
        if next <= self.cfg.sim.duration + 1e-9 {
            self.queue.push(next, Event::TrackingTick);
        }
    }

    /// Two-way ranging from `r` (beam in `sector`) to `target`.
    fn range_to(&mut self, r: usize, sector: usize, target: usize) -> Option<f64> {
        let rank = self.nodes[r].beam_rank(sector);
        let mut ch: ChannelConfig = self.cfg.channel;
        ch.sigma_t *= noise_scale_for_rank(&ch, rank);
        if !ch.sigma_t.is_finite() {
            return None;
        }
        let (pr, pt) = (self.nodes[r].position(), self.nodes[target].position());
        let tod_a = 0.0;
        let toa_b = propagate(pr, pt, tod_a, &ch, &mut self.channel_rng)?;
        let tod_b = toa_b + ch.turnaround;
        let toa_a = propagate(pt, pr, tod_b, &ch, &mut self.channel_rng)?;
        range_from_timestamps(&RangeMeasurement { tod_a, toa_b, tod_b, toa_a }, ch.c).ok()
    }

    /// One sample of an active track: zone, sector re-selection, beams,
    /// ranging, triangulation, and a switch when the pair stops working.
    pub fn tracking_tick(&mut self, t: usize) {
        let Some(mut pair) = self.tracks[t].pair() else { return };
        let target = self.tracks[t].target;
        let now = self.now;
        let sectors = self.cfg.sim.sectors;
        if !self.mutually_friendly(pair.a, pair.b) {
            self.begin_switch(t, SwitchCause::FriendlinessLost, pair.a, pair.b);
            return;
        }
        let last = match self.tracks[t].history.last() {
            Some(&(_, p)) => p,
            None => self.located_by(pair.a, target),
        };
        let dt = now - self.tracks[t].last_fix_time().unwrap_or(now);
        let pred = self.predict_capped(t, now).unwrap_or(last);

        let tpos = self.nodes[target].position();
        let range = self.cfg.channel.range_limit;
        let da = self.nodes[pair.a].position().distance(&tpos);
        let db = self.nodes[pair.b].position().distance(&tpos);
        if da > range || db > range {
            let (keep, drop) = if da > db { (pair.b, pair.a) } else { (pair.a, pair.b) };
            self.begin_switch(t, SwitchCause::OutOfRange, keep, drop);
            return;
        }

        // follow the target's predicted bearing across sector boundaries
        for side in 0..2 {
            let (r, s, other) = if side == 0 { (pair.a, pair.sector_a, pair.b) } else { (pair.b, pair.sector_b, pair.a) };
            let want = self.nodes[r].sector_facing(&pred);
            if want == s {
                continue;
            }
            if !self.nodes[r].sectors[want].is_idle() {
                self.log.contentions.push(ContentionEvent {
                    t: now,
                    node: self.nodes[r].id,
                    target: self.nodes[target].id,
                    sector: want,
                });
                self.begin_switch(t, SwitchCause::SectorContention, other, r);
                return;
            }
            let seq = self.nodes[r].activation[s];
            self.nodes[r].release(s);
            self.nodes[r].occupy(want, BeamAssignment::Tracking { target, partner: other }, seq);
            if side == 0 {
                pair.sector_a = want;
            } else {
                pair.sector_b = want;
            }
            self.tracks[t].status = TrackStatus::Active(pair);
        }

        let (pa, pb) = (self.nodes[pair.a].position(), self.nodes[pair.b].position());
        let v_max = self.cfg.mobility.v_max;
        let zone = match form_zone(pa, pb, pred, v_max, dt, &self.cfg.zone) {
            Ok(z) => z,
            Err(_) => return self.miss(t, pair),
        };
        let min_angle = self.cfg.zone.min_angle_deg;
        let mut lit = true;
        for (r, s) in [(pair.a, pair.sector_a), (pair.b, pair.sector_b)] {
            let node = &mut self.nodes[r];
            let origin = node.position();
            let width = crate::geometry::beamwidth_for_zone(&zone, origin, sectors);
            node.sectors[s].steer(origin.bearing_to(&zone.center), width, sectors);
            lit &= node.sectors[s].covers(origin.bearing_to(&tpos));
        }
        if !lit {
            return self.miss(t, pair);
        }
        let (Some(ra), Some(rb)) = (self.range_to(pair.a, pair.sector_a, target), self.range_to(pair.b, pair.sector_b, target))
        else {
            return self.miss(t, pair);
        };
        let position = match triangulate(pa, ra, pb, rb, &zone, self.cfg.zone.eps_g) {
            Ok(fix) => match fix.alternate {
                Some(alt) if fix.ambiguous && !self.beams_cover(&pair, &fix.position) && self.beams_cover(&pair, &alt) => alt,
                _ => fix.position,
            },
            Err(GeometryError::OutOfZone { nearest }) => nearest,
            Err(_) => return self.miss(t, pair),
        };
        // a near-collinear pair cannot resolve the fix
        let spread = angle_between(position.bearing_to(&pa), position.bearing_to(&pb));
        if spread < min_angle || spread > 180.0 - min_angle {
            self.begin_switch(t, SwitchCause::OutOfZone, pair.a, pair.b);
            return;
        }
        let track = &mut self.tracks[t];
        track.zone = Some(TrackingZone {
            disc: zone,
            ref_pair: (self.nodes[pair.a].id, self.nodes[pair.b].id),
            target: self.nodes[target].id,
            formed_at: now,
        });
        track.misses = 0;
        track.push_estimate(Estimate { t: now, position, truth: tpos, error: position.distance(&tpos) });

        // hand over early when the pair is about to lose its crossing angle
        let ahead = self.predict_capped(t, now + self.cfg.sim.sample_interval).unwrap_or(position);
        let spread = angle_between(ahead.bearing_to(&pa), ahead.bearing_to(&pb));
        if spread < min_angle || spread > 180.0 - min_angle {
            self.begin_switch(t, SwitchCause::OutOfZone, pair.a, pair.b);
        }
    }

    /// Constant-velocity prediction with the speed capped at `v_max`.
    fn predict_capped(&self, t: usize, now: f64) -> Option<Position> {
        let track = &self.tracks[t];
        let pred = track.predict(now)?;
        let (t_last, last) = *track.history.last()?;
        let reach = self.cfg.mobility.v_max * (now - t_last).max(0.0);
        let d = last.distance(&pred);
        if d <= reach || d == 0.0 {
            return Some(pred);
        }
        let k = reach / d;
        Some(last.offset((pred.x - last.x) * k, (pred.y - last.y) * k))
    }

    fn beams_cover(&self, pair: &RefPair, p: &Position) -> bool {
        [(pair.a, pair.sector_a), (pair.b, pair.sector_b)].iter().all(|&(r, s)| {
            let node = &self.nodes[r];
            node.sectors[s].covers(node.position().bearing_to(p))
        })
    }

    fn miss(&mut self, t: usize, pair: RefPair) {
        let track = &mut self.tracks[t];
        track.misses += 1;
        if track.misses >= 2 {
            self.begin_switch(t, SwitchCause::OutOfZone, pair.a, pair.b);
        }
    }

    /// Releases the pair and queues the search for a replacement of `drop`.
    fn begin_switch(&mut self, t: usize, cause: SwitchCause, keep: usize, drop: usize) {
        let Some(pair) = self.tracks[t].pair() else { return };
        let keep_sector = if pair.a == keep { pair.sector_a } else { pair.sector_b };
        let retained_seq = self.nodes[keep].activation[keep_sector];
        let (drop_node, drop_sector) = if pair.a == keep { (pair.b, pair.sector_b) } else { (pair.a, pair.sector_a) };
        self.nodes[drop_node].release(drop_sector);
        self.nodes[keep].sectors[keep_sector].assignment = BeamAssignment::Scanning;
        let track = &mut self.tracks[t];
        track.status = TrackStatus::Switching(PendingSwitch {
            retained: keep,
            dropped: drop,
            cause,
            trigger: self.now,
            scanned: false,
            retained_seq,
            held_sector: Some(keep_sector),
            candidate: None,
        });
        track.misses = 0;
        track.generation += 1;
        let generation = track.generation;
        let at = self.now.max(self.nodes[keep].scan_until);
        self.queue.push(at, Event::ResumeSwitch { track: t, generation });
    }

    /// Looks for a replacement pair, preferring to keep the retained
    /// reference. Without one the retained node scans once and retries;
    /// a second failure suspends the track.
    pub fn switch_reference(&mut self, t: usize) {
        let TrackStatus::Switching(mut ps) = self.tracks[t].status else { return };
        if self.nodes[ps.retained].is_scanning(self.now) {
            let generation = self.tracks[t].generation;
            self.queue.push(self.nodes[ps.retained].scan_until, Event::ResumeSwitch { track: t, generation });
            return;
        }
        let target = self.tracks[t].target;
        // after a blackout the retained node's own view beats extrapolation
        let stale = self.tracks[t].last_fix_time().is_none_or(|lt| self.now - lt > self.cfg.sim.sample_interval);
        let pred = if stale { Some(self.located_by(ps.retained, target)) } else { self.predict_capped(t, self.now) };
        let exclude = (ps.cause == SwitchCause::OutOfZone).then_some(ps.dropped);
        let held = ps.held_sector.map(|s| (ps.retained, s));
        let found = self
            .find_pair(target, Some(ps.retained), exclude, pred, held)
            .or_else(|| self.find_pair(target, None, exclude, pred, held));
        let found = found.filter(|(p, _)| self.verify(p.a, p.b, false) == Some(Verdict::Friendly));
        match found {
            Some((pair, _)) => {
                if let Some(s) = ps.held_sector.take() {
                    self.nodes[ps.retained].release(s);
                }
                self.occupy_pair(t, &pair, false, Some((ps.retained, ps.retained_seq)));
                let ch = self.cfg.channel;
                let d = self.nodes[pair.a].position().distance(&self.nodes[pair.b].position());
                let auth = (2 + self.cfg.sfv.j_max) as f64 * (2.0 * d / ch.c + ch.turnaround);
                ps.candidate = Some(pair);
                let track = &mut self.tracks[t];
                track.status = TrackStatus::Switching(ps);
                track.generation += 1;
                let generation = track.generation;
                self.queue.push(self.now + auth, Event::SwitchComplete { track: t, generation });
            }
            None if !ps.scanned => {
                ps.scanned = true;
                self.start_scan(ps.retained, self.cfg.sfv.scan_duration);
                let track = &mut self.tracks[t];
                track.status = TrackStatus::Switching(ps);
                track.generation += 1;
                let generation = track.generation;
                self.queue.push(self.nodes[ps.retained].scan_until, Event::ResumeSwitch { track: t, generation });
            }
            None => {
                if let Some(s) = ps.held_sector.take() {
                    self.nodes[ps.retained].release(s);
                }
                let event = SwitchEvent {
                    t: ps.trigger,
                    target: self.tracks[t].target_id,
                    old_ref: self.nodes[ps.dropped].id,
                    new_ref: None,
                    cause: ps.cause,
                    delay: self.now - ps.trigger,
                };
                let track = &mut self.tracks[t];
                track.status = TrackStatus::Waiting { suspended: true };
                track.generation += 1;
                track.switches.push(event);
                self.log.switches.push(event);
            }
        }
    }

    fn complete_switch(&mut self, t: usize) {
        let TrackStatus::Switching(mut ps) = self.tracks[t].status else { return };
        let Some(pair) = ps.candidate else { return };
        if !self.mutually_friendly(pair.a, pair.b) || self.detected[pair.a] || self.detected[pair.b] {
            self.release_pair(&pair);
            ps.candidate = None;
            let track = &mut self.tracks[t];
            track.status = TrackStatus::Switching(ps);
            track.generation += 1;
            let generation = track.generation;
            self.queue.push(self.now, Event::ResumeSwitch { track: t, generation });
            return;
        }
        let target = self.tracks[t].target;
        for (node, sector, other) in [(pair.a, pair.sector_a, pair.b), (pair.b, pair.sector_b, pair.a)] {
            self.nodes[node].sectors[sector].assignment = BeamAssignment::Tracking { target, partner: other };
        }
        let new_ref = if pair.a == ps.retained { pair.b } else { pair.a };
        let delay = self.now - ps.trigger;
        let event = SwitchEvent {
            t: ps.trigger,
            target: self.tracks[t].target_id,
            old_ref: self.nodes[ps.dropped].id,
            new_ref: Some(self.nodes[new_ref].id),
            cause: ps.cause,
            delay,
        };
        if ps.cause == SwitchCause::FriendlinessLost {
            self.friendly_event(ps.retained, new_ref, FriendlinessEventKind::TrackingResumed, delay);
        }
        // the scan that found the new pair also reacquires a stale target
        let stale = self.tracks[t].last_fix_time().is_none_or(|lt| self.now - lt > self.cfg.sim.sample_interval);
        if stale {
            let seed = self.located_by(ps.retained, target);
            self.tracks[t].history = vec![(self.now, seed)];
        }
        let track = &mut self.tracks[t];
        track.status = TrackStatus::Active(pair);
        track.generation += 1;
        track.misses = 0;
        track.switches.push(event);
        self.log.switches.push(event);
    }

    /// Checks the sector invariants; used by tests.
    pub fn check_invariants(&self) -> Result<(), String> {
        for node in &self.nodes {
            for (s, beam) in node.sectors.iter().enumerate() {
                if let BeamAssignment::Tracking { target, partner } = beam.assignment {
                    if !node.friendliness[partner].is_friendly() {
                        return Err(format!("node {} tracks {target} with non-friendly partner {partner}", node.index));
                    }
                    let owners = self
                        .tracks
                        .iter()
                        .filter(|t| t.pair().is_some_and(|p| (p.a == node.index && p.sector_a == s) || (p.b == node.index && p.sector_b == s)))
                        .count();
                    if owners != 1 {
                        return Err(format!("node {} sector {s} has {owners} tracks", node.index));
                    }
                }
            }
        }
        Ok(())
    }
}

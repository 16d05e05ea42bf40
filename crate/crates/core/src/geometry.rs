//! Planar geometry: two-way ranging, tracking zones, sector beams and
//! two-reference triangulation.
//!
//! Bearings are degrees counter-clockwise from the +x axis, in `[0,360)`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("negative net flight time ({net_s} s) in range measurement")]
    NegativeNetTime { net_s: f64 },
    #[error("degenerate geometry: {0}")]
    Degenerate(&'static str),
    #[error("range circles miss by {gap} m")]
    NoFix { gap: f64 },
    #[error("no intersection inside the zone")]
    OutOfZone { nearest: Position },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Bearing from `self` towards `other`.
    pub fn bearing_to(&self, other: &Position) -> f64 {
        normalize_deg((other.y - self.y).atan2(other.x - self.x).to_degrees())
    }

    pub fn offset(&self, dx: f64, dy: f64) -> Position {
        Position::new(self.x + dx, self.y + dy)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

pub fn normalize_deg(deg: f64) -> f64 {
    let d = deg.rem_euclid(360.0);
    // rem_euclid can return exactly 360.0 for tiny negative inputs
    if d >= 360.0 {
        0.0
    } else {
        d
    }
}

/// Absolute angular difference in `[0,180]`.
pub fn angle_between(a_deg: f64, b_deg: f64) -> f64 {
    let d = normalize_deg(a_deg - b_deg);
    d.min(360.0 - d)
}

/// Timestamps of one two-way exchange: A sends, B receives, B replies,
/// A receives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeMeasurement {
    pub tod_a: f64,
    pub toa_b: f64,
    pub tod_b: f64,
    pub toa_a: f64,
}

impl RangeMeasurement {
    pub fn net_flight_time(&self) -> f64 {
        (self.toa_a - self.tod_a) - (self.tod_b - self.toa_b)
    }
}

/// Half the round trip, net of the responder's turnaround, times `c`.
pub fn range_from_timestamps(m: &RangeMeasurement, c: f64) -> Result<f64, GeometryError> {
    let net = m.net_flight_time();
    if net < 0.0 || !net.is_finite() {
        return Err(GeometryError::NegativeNetTime { net_s: net });
    }
    Ok(c * net / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneConfig {
    pub alpha: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// Largest circle gap still reconciled into a fix.
    pub eps_g: f64,
    /// Smallest angle the two references may subtend at the target.
    pub min_angle_deg: f64,
}

impl Default for ZoneConfig {
    fn default() -> Self {
        ZoneConfig { alpha: 0.5, rho_min: 5.0, rho_max: 150.0, eps_g: 2.0, min_angle_deg: 20.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disc {
    pub center: Position,
    pub radius: f64,
}

impl Disc {
    pub fn contains(&self, p: &Position) -> bool {
        self.center.distance(p) <= self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingZone {
    pub disc: Disc,
    pub ref_pair: (u64, u64),
    pub target: u64,
    pub formed_at: f64,
}

/// Zone around the last estimate. The radius is `alpha` times the ratio of
/// the inter-reference distance to the mean target distance, scaled back by
/// that mean distance, plus the distance the target can cover in `dt`.
pub fn form_zone(
    ref_a: Position,
    ref_b: Position,
    last_est: Position,
    v_max: f64,
    dt: f64,
    cfg: &ZoneConfig,
) -> Result<Disc, GeometryError> {
    if !last_est.is_finite() {
        return Err(GeometryError::Degenerate("non-finite estimate"));
    }
    let d12 = ref_a.distance(&ref_b);
    if d12 == 0.0 {
        return Err(GeometryError::Degenerate("coincident references"));
    }
    let d_avg = (last_est.distance(&ref_a) + last_est.distance(&ref_b)) / 2.0;
    if d_avg == 0.0 {
        return Err(GeometryError::Degenerate("target on both references"));
    }
    let ratio = d12 / d_avg;
    let radius = (cfg.alpha * ratio * d_avg + v_max * dt.max(0.0)).clamp(cfg.rho_min, cfg.rho_max);
    Ok(Disc { center: last_est, radius })
}

/// Beamwidth that just covers the zone from `observer`, capped at one sector.
pub fn beamwidth_for_zone(zone: &Disc, observer: Position, sectors: usize) -> f64 {
    let sector_width = 360.0 / sectors as f64;
    let d = observer.distance(&zone.center);
    if d == 0.0 {
        return sector_width;
    }
    let theta = 2.0 * (zone.radius / d).min(1.0).asin().to_degrees();
    theta.min(sector_width)
}

pub fn sector_of(bearing_deg: f64, sectors: usize) -> usize {
    assert!(sectors >= 1, "at least one sector");
    let width = 360.0 / sectors as f64;
    ((normalize_deg(bearing_deg) / width).floor() as usize).min(sectors - 1)
}

/// Half-open angular span `[start, end)` of a sector.
pub fn sector_span(index: usize, sectors: usize) -> (f64, f64) {
    let width = 360.0 / sectors as f64;
    (index as f64 * width, (index + 1) as f64 * width)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeamAssignment {
    Idle,
    Scanning,
    Authenticating { peer: usize },
    Tracking { target: usize, partner: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorBeam {
    pub owner: u64,
    pub sector_index: usize,
    pub boresight: f64,
    pub beamwidth: f64,
    pub assignment: BeamAssignment,
}

impl SectorBeam {
    pub fn idle(owner: u64, sector_index: usize, sectors: usize) -> Self {
        let (start, end) = sector_span(sector_index, sectors);
        SectorBeam {
            owner,
            sector_index,
            boresight: (start + end) / 2.0,
            beamwidth: end - start,
            assignment: BeamAssignment::Idle,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.assignment == BeamAssignment::Idle
    }

    /// Points the beam; the boresight is kept inside the sector span.
    pub fn steer(&mut self, bearing_deg: f64, beamwidth: f64, sectors: usize) {
        let (start, end) = sector_span(self.sector_index, sectors);
        let b = normalize_deg(bearing_deg);
        self.boresight = if b >= start && b < end { b } else { (start + end) / 2.0 };
        self.beamwidth = beamwidth.min(end - start);
    }

    pub fn covers(&self, bearing_deg: f64) -> bool {
        angle_between(self.boresight, bearing_deg) <= self.beamwidth / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fix {
    pub position: Position,
    /// The mirror intersection, when the circles cross at two points.
    pub alternate: Option<Position>,
    /// Both intersections fell inside the zone.
    pub ambiguous: bool,
    /// The circles did not meet and the fix was projected onto the baseline.
    pub reconciled: bool,
}

/// Two-circle position fix disambiguated by the tracking zone.
pub fn triangulate(
    ref_a: Position,
    r_a: f64,
    ref_b: Position,
    r_b: f64,
    zone: &Disc,
    eps_g: f64,
) -> Result<Fix, GeometryError> {
    let d = ref_a.distance(&ref_b);
    if d == 0.0 {
        return Err(GeometryError::Degenerate("coincident references"));
    }
    if r_a < 0.0 || r_b < 0.0 || !r_a.is_finite() || !r_b.is_finite() {
        return Err(GeometryError::Degenerate("invalid range"));
    }
    let ux = (ref_b.x - ref_a.x) / d;
    let uy = (ref_b.y - ref_a.y) / d;

    let gap = (d - (r_a + r_b)).max((r_a - r_b).abs() - d);
    if gap > 0.0 {
        if gap > eps_g {
            return Err(GeometryError::NoFix { gap });
        }
        let t = baseline_least_squares(d, r_a, r_b);
        let p = ref_a.offset(t * ux, t * uy);
        if !zone.contains(&p) {
            return Err(GeometryError::OutOfZone { nearest: p });
        }
        return Ok(Fix { position: p, alternate: None, ambiguous: false, reconciled: true });
    }

    let a = (r_a * r_a - r_b * r_b + d * d) / (2.0 * d);
    let h = (r_a * r_a - a * a).max(0.0).sqrt();
    let foot = ref_a.offset(a * ux, a * uy);
    if h == 0.0 {
        if !zone.contains(&foot) {
            return Err(GeometryError::OutOfZone { nearest: foot });
        }
        return Ok(Fix { position: foot, alternate: None, ambiguous: false, reconciled: false });
    }
    let p1 = foot.offset(-h * uy, h * ux);
    let p2 = foot.offset(h * uy, -h * ux);
    let (near, far) = if zone.center.distance(&p1) <= zone.center.distance(&p2) {
        (p1, p2)
    } else {
        (p2, p1)
    };
    match (zone.contains(&near), zone.contains(&far)) {
        (true, true) => Ok(Fix { position: near, alternate: Some(far), ambiguous: true, reconciled: false }),
        (true, false) => Ok(Fix { position: near, alternate: Some(far), ambiguous: false, reconciled: false }),
        _ => Err(GeometryError::OutOfZone { nearest: near }),
    }
}

/// Distance along the baseline from A minimising the squared range
/// residuals `(|t| - r_a)^2 + (|d - t| - r_b)^2`.
fn baseline_least_squares(d: f64, r_a: f64, r_b: f64) -> f64 {
    let cost = |t: f64| {
        let ea = t.abs() - r_a;
        let eb = (d - t).abs() - r_b;
        ea * ea + eb * eb
    };
    let candidates = [
        ((d - r_b - r_a) / 2.0).min(0.0),
        ((r_a + d - r_b) / 2.0).clamp(0.0, d),
        ((r_a + d + r_b) / 2.0).max(d),
    ];
    candidates
        .into_iter()
        .min_by(|x, y| cost(*x).total_cmp(&cost(*y)))
        .unwrap_or(0.0)
}

//! Node motion: random waypoint with zero pause time, fixed-heading
//! parallel lanes reflected at the area boundary, and stationary nodes.

use rand::Rng;

use crate::geometry::Position;

/// Axis-aligned box that random waypoints are drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub min: Position,
    pub max: Position,
}

impl Region {
    pub fn square(side: f64) -> Self {
        Region { min: Position::new(0.0, 0.0), max: Position::new(side, side) }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Position {
        Position::new(
            self.min.x + rng.random::<f64>() * (self.max.x - self.min.x),
            self.min.y + rng.random::<f64>() * (self.max.y - self.min.y),
        )
    }

    pub fn contains(&self, p: &Position) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MobilityModel {
    RandomWaypoint { region: Region },
    ParallelPath { lane: usize, spacing: f64, heading_deg: f64 },
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityState {
    pub position: Position,
    pub velocity: (f64, f64),
    pub waypoint: Position,
    pub v_min: f64,
    pub v_max: f64,
    pub model: MobilityModel,
}

fn draw_speed<R: Rng + ?Sized>(v_min: f64, v_max: f64, rng: &mut R) -> f64 {
    if v_max > v_min {
        v_min + rng.random::<f64>() * (v_max - v_min)
    } else {
        v_min
    }
}

fn heading_velocity(from: Position, to: Position, speed: f64) -> (f64, f64) {
    let d = from.distance(&to);
    if d == 0.0 {
        (0.0, 0.0)
    } else {
        ((to.x - from.x) / d * speed, (to.y - from.y) / d * speed)
    }
}

/// Folds a coordinate back into `[0, side]`, returning whether the
/// direction flipped.
fn reflect(mut v: f64, side: f64) -> (f64, bool) {
    let mut flipped = false;
    for _ in 0..64 {
        if v < 0.0 {
            v = -v;
        } else if v > side {
            v = 2.0 * side - v;
        } else {
            break;
        }
        flipped = !flipped;
    }
    (v.clamp(0.0, side), flipped)
}

impl MobilityState {
    pub fn random_waypoint<R: Rng + ?Sized>(
        start: Position,
        v_min: f64,
        v_max: f64,
        region: Region,
        rng: &mut R,
    ) -> Self {
        let waypoint = region.sample(rng);
        let speed = draw_speed(v_min, v_max, rng);
        MobilityState {
            position: start,
            velocity: heading_velocity(start, waypoint, speed),
            waypoint,
            v_min,
            v_max,
            model: MobilityModel::RandomWaypoint { region },
        }
    }

    /// A lane offset `lane * spacing` to the left of the heading through
    /// `origin`.
    pub fn parallel_lane(origin: Position, lane: usize, spacing: f64, heading_deg: f64, speed: f64) -> Self {
        let h = heading_deg.to_radians();
        let offset = lane as f64 * spacing;
        let position = origin.offset(-h.sin() * offset, h.cos() * offset);
        MobilityState {
            position,
            velocity: (h.cos() * speed, h.sin() * speed),
            waypoint: position,
            v_min: speed,
            v_max: speed,
            model: MobilityModel::ParallelPath { lane, spacing, heading_deg },
        }
    }

    pub fn stationary(position: Position) -> Self {
        MobilityState {
            position,
            velocity: (0.0, 0.0),
            waypoint: position,
            v_min: 0.0,
            v_max: 0.0,
            model: MobilityModel::Stationary,
        }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.0.hypot(self.velocity.1)
    }

    /// Advances by `dt` seconds inside the `[0, area]^2` square.
    pub fn step<R: Rng + ?Sized>(&self, dt: f64, area: f64, rng: &mut R) -> MobilityState {
        let mut next = *self;
        if dt <= 0.0 {
            return next;
        }
        match self.model {
            MobilityModel::Stationary => {}
            MobilityModel::RandomWaypoint { region } => {
                let mut remaining = dt;
                // bounded so a zero-length leg can never spin forever
                for _ in 0..10_000 {
                    let speed = next.speed();
                    let to_go = next.position.distance(&next.waypoint);
                    if speed > 0.0 && speed * remaining < to_go {
                        next.position = next.position.offset(next.velocity.0 * remaining, next.velocity.1 * remaining);
                        break;
                    }
                    if speed > 0.0 {
                        remaining -= to_go / speed;
                    } else if to_go > 0.0 {
                        break;
                    }
                    next.position = next.waypoint;
                    next.waypoint = region.sample(rng);
                    let new_speed = draw_speed(next.v_min, next.v_max, rng);
                    next.velocity = heading_velocity(next.position, next.waypoint, new_speed);
                    if remaining <= 0.0 || new_speed == 0.0 {
                        break;
                    }
                }
            }
            MobilityModel::ParallelPath { .. } => {
                let (x, fx) = reflect(next.position.x + next.velocity.0 * dt, area);
                let (y, fy) = reflect(next.position.y + next.velocity.1 * dt, area);
                next.position = Position::new(x, y);
                if fx {
                    next.velocity.0 = -next.velocity.0;
                }
                if fy {
                    next.velocity.1 = -next.velocity.1;
                }
                next.waypoint = next.position;
            }
        }
        next
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn moves_along_segment() {
        let mut s = MobilityState::stationary(Position::new(0.0, 0.0));
        s.model = MobilityModel::RandomWaypoint { region: Region::square(400.0) };
        s.waypoint = Position::new(100.0, 0.0);
        s.velocity = (10.0, 0.0);
        s.v_min = 10.0;
        s.v_max = 10.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = s.step(5.0, 400.0, &mut rng);
        assert!((n.position.x - 50.0).abs() < 1e-12);
        assert_eq!(n.position.y, 0.0);
        assert_eq!(n.waypoint, s.waypoint);
    }

    #[test]
    fn arrival_draws_new_leg() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = MobilityState::random_waypoint(Position::new(0.0, 0.0), 2.0, 4.0, Region::square(400.0), &mut rng);
        s.waypoint = Position::new(10.0, 0.0);
        s.velocity = (4.0, 0.0);
        let n = s.step(5.0, 400.0, &mut rng);
        assert_ne!(n.waypoint, s.waypoint);
        // 2.5 s to the waypoint, then 2.5 s on the new leg
        let leg = n.position.distance(&Position::new(10.0, 0.0));
        assert!((2.0 * 2.5 - 1e-9..=4.0 * 2.5 + 1e-9).contains(&leg), "{leg}");
    }

    #[test]
    fn random_waypoint_stays_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = MobilityState::random_waypoint(Position::new(200.0, 200.0), 1.0, 20.0, Region::square(400.0), &mut rng);
        for _ in 0..10_000 {
            s = s.step(1.0, 400.0, &mut rng);
            assert!(Region::square(400.0).contains(&s.position), "{:?}", s.position);
            let v = s.speed();
            assert!((1.0 - 1e-9..=20.0 + 1e-9).contains(&v));
        }
    }

    #[test]
    fn split_steps_match_single_step() {
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let s = MobilityState::random_waypoint(Position::new(10.0, 10.0), 1.0, 10.0, Region::square(400.0), &mut r1);
        let _ = MobilityState::random_waypoint(Position::new(10.0, 10.0), 1.0, 10.0, Region::square(400.0), &mut r2);
        let whole = s.step(120.0, 400.0, &mut r1);
        let mut parts = s;
        for _ in 0..120 {
            parts = parts.step(1.0, 400.0, &mut r2);
        }
        assert!(whole.position.distance(&parts.position) < 1e-6);
    }

    #[test]
    fn parallel_lanes_stay_parallel() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut lanes: Vec<MobilityState> = (0..4)
            .map(|k| MobilityState::parallel_lane(Position::new(30.0, 140.0), k, 40.0, 0.0, 10.0))
            .collect();
        for _ in 0..200 {
            for l in lanes.iter_mut() {
                *l = l.step(1.0, 400.0, &mut rng);
            }
            for w in lanes.windows(2) {
                assert!((w[1].position.y - w[0].position.y - 40.0).abs() < 1e-9);
                assert!((w[1].position.x - w[0].position.x).abs() < 1e-9);
            }
            assert!(lanes.iter().all(|l| l.position.x >= 0.0 && l.position.x <= 400.0));
        }
    }

    #[test]
    fn reflection_flips_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = MobilityState::parallel_lane(Position::new(395.0, 100.0), 0, 40.0, 0.0, 10.0);
        let n = s.step(1.0, 400.0, &mut rng);
        assert!((n.position.x - 395.0).abs() < 1e-12);
        assert!(n.velocity.0 < 0.0);
    }

    #[test]
    fn deterministic_trajectory() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let mut s = MobilityState::random_waypoint(Position::new(1.0, 2.0), 1.0, 10.0, Region::square(400.0), &mut rng);
            (0..500).map(|_| { s = s.step(1.0, 400.0, &mut rng); s.position }).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}

//! Seeded synthetic highway corpora with straight and lane-change vehicles.
//!
//! Lane changes follow a quintic lateral profile between lane centers.
//! Longitudinal motion is a constant speed plus a small sum of sinusoids,
//! and every vehicle draws from its own derived RNG stream.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::trajdata::{finite_difference_velocities, Dataset, FrameRow, LaneGeometry};

/// Minimum same-lane longitudinal gap, m.
pub const MIN_GAP: f64 = 10.0;
const PLACEMENT_ATTEMPTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Maneuver {
    Straight,
    Left,
    Right,
}

impl Maneuver {
    pub const ALL: [Maneuver; 3] = [Maneuver::Straight, Maneuver::Left, Maneuver::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Maneuver::Straight => "straight",
            Maneuver::Left => "left",
            Maneuver::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    /// Classifies a lateral displacement measured in the direction of travel
    /// (positive = left).
    pub fn classify(lateral_displacement: f64, lane_width: f64) -> Self {
        if lateral_displacement > lane_width / 2.0 {
            Maneuver::Left
        } else if lateral_displacement < -lane_width / 2.0 {
            Maneuver::Right
        } else {
            Maneuver::Straight
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub lane_count: usize,
    pub lane_width: f64,
    /// Recording span over which vehicles enter, s.
    pub duration: f64,
    /// Length of each vehicle's track, s.
    pub track_duration: f64,
    pub dt: f64,
    pub vehicle_count: usize,
    /// Fractions of (straight, left, right).
    pub maneuver_mix: [f64; 3],
    pub speed_range: (f64, f64),
    /// Lane-change duration range, s.
    pub change_duration: (f64, f64),
    /// Range of lane-change start times after track start, s.
    pub change_start: (f64, f64),
    /// +1 eastbound, -1 westbound.
    pub travel_direction: i8,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            lane_count: 3,
            lane_width: 3.7,
            duration: 600.0,
            track_duration: 8.0,
            dt: 0.1,
            vehicle_count: 200,
            maneuver_mix: [0.4, 0.3, 0.3],
            speed_range: (24.5, 25.5),
            change_duration: (4.0, 6.0),
            change_start: (2.0, 4.0),
            travel_direction: 1,
            seed: 42,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.lane_count < 2 {
            problems.push(format!("lane_count must be >= 2 (got {})", self.lane_count));
        }
        if !(self.lane_width > 0.0) {
            problems.push("lane_width must be positive".into());
        }
        if !(self.dt > 0.0) {
            problems.push("dt must be positive".into());
        }
        if self.maneuver_mix.iter().any(|f| !(*f >= 0.0)) {
            problems.push("maneuver fractions must be non-negative".into());
        }
        let total: f64 = self.maneuver_mix.iter().sum();
        if libm::fabs(total - 1.0) > 1e-9 {
            problems.push(format!("maneuver fractions must sum to 1 (got {total})"));
        }
        let (lo, hi) = self.speed_range;
        if !(lo > 0.0 && hi >= lo) {
            problems.push("speed_range must satisfy 0 < min <= max".into());
        }
        if !(self.change_duration.0 > 0.0 && self.change_duration.1 >= self.change_duration.0) {
            problems.push("change_duration must satisfy 0 < min <= max".into());
        }
        if !(self.track_duration > self.dt && self.duration >= self.track_duration) {
            problems.push("need dt < track_duration <= duration".into());
        }
        if self.travel_direction != 1 && self.travel_direction != -1 {
            problems.push("travel_direction must be +1 or -1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }

    pub fn lanes(&self) -> Result<LaneGeometry> {
        let g = LaneGeometry::uniform(self.lane_count, self.lane_width)?;
        LaneGeometry::new(g.lines().to_vec(), self.travel_direction)
    }

    fn track_frames(&self) -> usize {
        libm::round(self.track_duration / self.dt) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub dt: f64,
    /// Canonical rows, grouped by vehicle in increasing frame order.
    pub rows: Vec<FrameRow>,
    pub labels: Vec<(u64, Maneuver)>,
    pub lanes: LaneGeometry,
}

impl SyntheticCorpus {
    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::from_rows(self.rows.clone(), self.dt)
    }

    pub fn label(&self, vehicle_id: u64) -> Option<Maneuver> {
        self.labels
            .binary_search_by_key(&vehicle_id, |(id, _)| *id)
            .ok()
            .map(|i| self.labels[i].1)
    }
}

/// Smooth 0 -> 1 step with zero first and second derivatives at both ends.
pub fn quintic_step(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
}

struct Sinusoid {
    amplitude: f64,
    omega: f64,
    phase: f64,
}

struct VehiclePlan {
    maneuver: Maneuver,
    lane: usize,
    speed: f64,
    change_start: f64,
    change_duration: f64,
    speed_wobble: Vec<Sinusoid>,
    lateral_wobble: Vec<Sinusoid>,
}

impl VehiclePlan {
    fn sample(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Self {
        let u: f64 = rng.gen();
        let [fs, fl, _] = spec.maneuver_mix;
        let maneuver = if u < fs {
            Maneuver::Straight
        } else if u < fs + fl {
            Maneuver::Left
        } else {
            Maneuver::Right
        };
        let lane = match maneuver {
            Maneuver::Straight => rng.gen_range(0..spec.lane_count),
            Maneuver::Left => rng.gen_range(0..spec.lane_count - 1),
            Maneuver::Right => rng.gen_range(1..spec.lane_count),
        };
        let speed = uniform(rng, spec.speed_range);
        let change_duration = uniform(rng, spec.change_duration).min(spec.track_duration);
        let latest = (spec.track_duration - change_duration).max(0.0);
        let hi = spec.change_start.1.min(latest);
        let lo = spec.change_start.0.min(hi);
        let change_start = uniform(rng, (lo, hi));
        let speed_wobble = wobble(rng, 0.3);
        let lateral_wobble = wobble(rng, 0.1);
        Self {
            maneuver,
            lane,
            speed,
            change_start,
            change_duration,
            speed_wobble,
            lateral_wobble,
        }
    }

    /// Position at time `t` after entry, in lane-relative road coordinates
    /// (x along travel, y positive to the left).
    fn position(&self, spec: &ScenarioSpec, t: f64) -> Vec2 {
        let mut x = self.speed * t;
        for s in &self.speed_wobble {
            x += s.amplitude / s.omega * (libm::cos(s.phase) - libm::cos(s.omega * t + s.phase));
        }
        let target = match self.maneuver {
            Maneuver::Straight => 0.0,
            Maneuver::Left => spec.lane_width,
            Maneuver::Right => -spec.lane_width,
        };
        let mut y = target * quintic_step((t - self.change_start) / self.change_duration);
        for s in &self.lateral_wobble {
            y += s.amplitude * (libm::sin(s.omega * t + s.phase) - libm::sin(s.phase));
        }
        [x, y]
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Two or three sinusoids whose amplitudes sum to at most `budget`.
fn wobble(rng: &mut ChaCha8Rng, budget: f64) -> Vec<Sinusoid> {
    let n = rng.gen_range(2..=3);
    (0..n)
        .map(|_| Sinusoid {
            amplitude: rng.gen_range(0.0..budget / n as f64),
            omega: 2.0 * PI / rng.gen_range(3.0..10.0),
            phase: rng.gen_range(0.0..2.0 * PI),
        })
        .collect()
}

fn vehicle_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

struct Placed {
    entry: usize,
    road: Vec<Vec2>,
}

fn lane_of(y: f64, width: f64, lanes: usize) -> usize {
    (libm::floor(y / width).max(0.0) as usize).min(lanes - 1)
}

fn conflicts(a: &Placed, b: &Placed, spec: &ScenarioSpec) -> bool {
    let start = a.entry.max(b.entry);
    let end = (a.entry + a.road.len()).min(b.entry + b.road.len());
    (start..end).any(|f| {
        let pa = a.road[f - a.entry];
        let pb = b.road[f - b.entry];
        lane_of(pa[1], spec.lane_width, spec.lane_count) == lane_of(pb[1], spec.lane_width, spec.lane_count)
            && libm::fabs(pa[0] - pb[0]) < MIN_GAP
    })
}

/// Generates a corpus for `spec`. Output is a pure function of the spec.
pub fn generate(spec: &ScenarioSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let lanes = spec.lanes()?;
    let frames = spec.track_frames();
    let span_frames = libm::round(spec.duration / spec.dt) as usize;
    let last_entry = span_frames.saturating_sub(frames);
    let dir = f64::from(spec.travel_direction);

    let mut placed: Vec<Placed> = Vec::with_capacity(spec.vehicle_count);
    let mut labels = Vec::with_capacity(spec.vehicle_count);
    let mut rows = Vec::with_capacity(spec.vehicle_count * frames);
    for index in 0..spec.vehicle_count {
        let mut rng = ChaCha8Rng::seed_from_u64(vehicle_seed(spec.seed, index));
        let mut accepted = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let plan = VehiclePlan::sample(spec, &mut rng);
            let entry = rng.gen_range(0..=last_entry);
            let center = (plan.lane as f64 + 0.5) * spec.lane_width;
            // road frame: x along travel, y lateral offset of the lane lines
            let road: Vec<Vec2> = (0..frames)
                .map(|i| {
                    let [x, y] = plan.position(spec, i as f64 * spec.dt);
                    [x, center + y]
                })
                .collect();
            let candidate = Placed { entry, road };
            if !placed.iter().any(|p| conflicts(p, &candidate, spec)) {
                accepted = Some((plan, candidate));
                break;
            }
        }
        let Some((plan, vehicle)) = accepted else {
            return Err(Error::Infeasible(format!(
                "vehicle {} could not be placed with the {MIN_GAP} m same-lane gap after {PLACEMENT_ATTEMPTS} attempts; \
                 lengthen the duration or reduce vehicle_count",
                index + 1
            )));
        };

        let vehicle_id = index as u64 + 1;
        // Westbound traffic runs toward -x with its left on -y, mirrored
        // about the road center line.
        let width = spec.lane_count as f64 * spec.lane_width;
        let world: Vec<Vec2> = vehicle
            .road
            .iter()
            .map(|&[x, y]| if dir > 0.0 { [x, y] } else { [-x, width - y] })
            .collect();
        let velocities = finite_difference_velocities(&world, spec.dt);
        for (i, (p, v)) in world.iter().zip(&velocities).enumerate() {
            rows.push(FrameRow {
                frame: (vehicle.entry + i) as i64,
                vehicle_id,
                position: *p,
                velocity: Some(*v),
                lane_id: Some(lane_of(p[1], spec.lane_width, spec.lane_count) as i32 + 1),
                line: 0,
            });
        }
        labels.push((vehicle_id, plan.maneuver));
        placed.push(vehicle);
    }
    Ok(SyntheticCorpus {
        dt: spec.dt,
        rows,
        labels,
        lanes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom;

    fn small(mix: [f64; 3]) -> ScenarioSpec {
        ScenarioSpec {
            vehicle_count: 60,
            duration: 300.0,
            maneuver_mix: mix,
            ..ScenarioSpec::default()
        }
    }

    fn per_vehicle(c: &SyntheticCorpus) -> Vec<Vec<&FrameRow>> {
        let mut out: Vec<Vec<&FrameRow>> = Vec::new();
        for r in &c.rows {
            if out.last().is_none_or(|v| v[0].vehicle_id != r.vehicle_id) {
                out.push(Vec::new());
            }
            out.last_mut().unwrap().push(r);
        }
        out
    }

    #[test]
    fn straight_mix_stays_in_lane() {
        let c = generate(&small([1.0, 0.0, 0.0])).unwrap();
        for v in per_vehicle(&c) {
            let ys: Vec<f64> = v.iter().map(|r| r.position[1]).collect();
            let span = ys.iter().cloned().fold(f64::MIN, f64::max) - ys.iter().cloned().fold(f64::MAX, f64::min);
            assert!(span < 0.3, "lateral span {span}");
        }
    }

    #[test]
    fn left_change_reaches_next_lane() {
        let c = generate(&small([0.0, 1.0, 0.0])).unwrap();
        for v in per_vehicle(&c) {
            let dy = v.last().unwrap().position[1] - v[0].position[1];
            assert!((dy - 3.7).abs() < 0.2, "dy {dy}");
        }
    }

    #[test]
    fn same_seed_same_rows() {
        let spec = small([0.4, 0.3, 0.3]);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = ScenarioSpec { seed: 43, ..spec };
        assert_ne!(
            generate(&other).unwrap().rows,
            generate(&small([0.4, 0.3, 0.3])).unwrap().rows
        );
    }

    #[test]
    fn labels_match_threshold_classifier() {
        for dir in [1, -1] {
            let c = generate(&ScenarioSpec {
                travel_direction: dir,
                ..small([0.4, 0.3, 0.3])
            })
            .unwrap();
            for v in per_vehicle(&c) {
                let dy = (v.last().unwrap().position[1] - v[0].position[1]) * f64::from(dir);
                assert_eq!(Maneuver::classify(dy, 3.7), c.label(v[0].vehicle_id).unwrap());
            }
        }
    }

    #[test]
    fn velocities_match_finite_differences() {
        let c = generate(&small([0.4, 0.3, 0.3])).unwrap();
        for v in per_vehicle(&c) {
            let pos: Vec<Vec2> = v.iter().map(|r| r.position).collect();
            let fd = finite_difference_velocities(&pos, c.dt);
            for (r, f) in v.iter().zip(&fd) {
                assert!(geom::dist(r.velocity.unwrap(), *f) < 1e-6);
            }
        }
    }

    #[test]
    fn same_lane_gap_respected() {
        let spec = small([0.4, 0.3, 0.3]);
        let c = generate(&spec).unwrap();
        let mut by_frame: alloc::collections::BTreeMap<i64, Vec<&FrameRow>> = Default::default();
        for r in &c.rows {
            by_frame.entry(r.frame).or_default().push(r);
        }
        for rows in by_frame.values() {
            for (i, a) in rows.iter().enumerate() {
                for b in &rows[i + 1..] {
                    if a.lane_id == b.lane_id {
                        assert!((a.position[0] - b.position[0]).abs() >= MIN_GAP);
                    }
                }
            }
        }
    }

    #[test]
    fn infeasible_density_names_constraint() {
        let spec = ScenarioSpec {
            vehicle_count: 400,
            duration: 9.0,
            ..ScenarioSpec::default()
        };
        match generate(&spec) {
            Err(Error::Infeasible(msg)) => assert!(msg.contains("gap"), "{msg}"),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn invalid_mix_rejected() {
        assert!(generate(&small([0.5, 0.3, 0.3])).is_err());
    }
}

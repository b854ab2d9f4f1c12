//! Closed-form potentials and forces.
//!
//! Forces are the negative gradients of the potentials with respect to the
//! target position. Lane lines run along x, so line forces are lateral.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geom::{self, Vec2};
use crate::trajdata::{LaneGeometry, LineKind, VehicleState};

/// Below this separation positions are treated as coincident.
pub const EPS_POS: f64 = 1e-6;
/// Boundary-line distances are clamped to at least this value.
pub const EPS_LINE: f64 = 0.1;

/// Goal-directed desired velocity at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesiredVelocity {
    /// Desired speed, m/s.
    pub v0: f64,
    /// Unit direction toward the goal, or zero at the goal.
    pub e: Vec2,
    pub v_des: Vec2,
}

/// Desired velocity that reaches `goal` from `position` in the
/// `final_step - step` remaining frames.
pub fn desired_velocity(
    position: Vec2,
    goal: Vec2,
    step: usize,
    final_step: usize,
    dt: f64,
) -> Result<DesiredVelocity> {
    if step >= final_step {
        return Err(Error::Contract(alloc::format!(
            "step {step} is not before final step {final_step}"
        )));
    }
    let delta = geom::sub(goal, position);
    let dist = geom::norm(delta);
    let remaining = (final_step - step) as f64 * dt;
    if dist <= EPS_POS {
        return Ok(DesiredVelocity {
            v0: dist / remaining,
            e: [0.0, 0.0],
            v_des: [0.0, 0.0],
        });
    }
    let v0 = dist / remaining;
    let e = geom::scale(delta, 1.0 / dist);
    Ok(DesiredVelocity {
        v0,
        e,
        v_des: geom::scale(e, v0),
    })
}

/// Relaxation of the current velocity toward the desired one within `tau`.
pub fn goal_force(state: &VehicleState, goal: Vec2, step: usize, final_step: usize, dt: f64, tau: f64) -> Result<Vec2> {
    if !(tau > 0.0) {
        return Err(Error::Contract(alloc::format!("tau must be positive (got {tau})")));
    }
    let d = desired_velocity(state.position, goal, step, final_step, dt)?;
    Ok(geom::scale(geom::sub(d.v_des, state.velocity), 1.0 / tau))
}

/// `r_col * k * exp(-|r| / r_col)`.
pub fn vehicle_potential(r: Vec2, k: f64, r_col: f64) -> f64 {
    r_col * k * libm::exp(-geom::norm(r) / r_col)
}

/// Potential of one line at lateral distance `d`; the flag reports whether a
/// boundary distance was clamped.
pub fn line_potential(d: f64, kind: LineKind, k: f64, eps_line: f64) -> (f64, bool) {
    let d = libm::fabs(d);
    match kind {
        LineKind::Center => (k * libm::exp(-d * d), false),
        LineKind::Boundary => {
            let clamped = d < eps_line;
            let d = d.max(eps_line);
            (k * 0.5 / (d * d), clamped)
        }
    }
}

/// Force on the target from a neighbor at offset `r = p_target - p_neighbor`.
/// `fallback` is the unit direction used when the two coincide.
pub fn vehicle_force(r: Vec2, k: f64, r_col: f64, fallback: Vec2) -> (Vec2, bool) {
    let n = geom::norm(r);
    if n < EPS_POS {
        return (geom::scale(fallback, k * libm::exp(-EPS_POS / r_col)), true);
    }
    (geom::scale(r, k * libm::exp(-n / r_col) / n), false)
}

/// Lateral force from a line at signed offset `d = y_target - y_line`.
/// `inward` is the direction used when a boundary is hit exactly.
pub fn line_force(d: f64, kind: LineKind, k: f64, eps_line: f64, inward: f64) -> (Vec2, bool) {
    match kind {
        LineKind::Center => ([0.0, 2.0 * k * d * libm::exp(-d * d)], false),
        LineKind::Boundary => {
            let a = libm::fabs(d);
            if a < eps_line {
                let sign = if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    inward
                };
                ([0.0, sign * k / (eps_line * eps_line * eps_line)], true)
            } else {
                ([0.0, k / (d * d * d)], false)
            }
        }
    }
}

/// A neighbor position at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborPoint {
    pub id: u64,
    pub position: Vec2,
}

/// Guard activations recorded while computing forces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ClampEvent {
    CoincidentVehicle { id: u64 },
    BoundaryClamp { line: usize },
}

/// Total repulsion and its per-source parts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Repulsion {
    pub total: Vec2,
    pub vehicles: Vec<(u64, Vec2)>,
    pub lines: Vec<(usize, Vec2)>,
    pub events: Vec<ClampEvent>,
}

/// Lateral unit direction pointing away from the lane that contains `y`.
pub fn away_from_lane(y_target: f64, y_neighbor: f64, lanes: &LaneGeometry) -> Vec2 {
    let lines = lanes.lines();
    let mut center = y_neighbor;
    for pair in lines.windows(2) {
        if y_neighbor >= pair[0].offset && y_neighbor <= pair[1].offset {
            center = 0.5 * (pair[0].offset + pair[1].offset);
            break;
        }
    }
    if y_target < center {
        [0.0, -1.0]
    } else {
        [0.0, 1.0]
    }
}

/// Repulsive force on a vehicle at `position`. Components are summed in
/// order: neighbors first, then lines.
pub fn repulsion_force(
    position: Vec2,
    neighbors: &[NeighborPoint],
    k_vehicle: &[f64],
    lanes: &LaneGeometry,
    k_line: &[f64],
    r_col: f64,
    eps_line: f64,
) -> Result<Repulsion> {
    if k_vehicle.len() != neighbors.len() || k_line.len() != lanes.lines().len() {
        return Err(Error::Shape {
            op: "repulsion_force",
            left: [neighbors.len(), lanes.lines().len()],
            right: [k_vehicle.len(), k_line.len()],
        });
    }
    let mut out = Repulsion::default();
    let mut total = [0.0, 0.0];
    for (n, &k) in neighbors.iter().zip(k_vehicle) {
        let r = geom::sub(position, n.position);
        let fallback = away_from_lane(position[1], n.position[1], lanes);
        let (f, coincident) = vehicle_force(r, k, r_col, fallback);
        if coincident {
            out.events.push(ClampEvent::CoincidentVehicle { id: n.id });
        }
        total = geom::add(total, f);
        out.vehicles.push((n.id, f));
    }
    for (i, (line, &k)) in lanes.lines().iter().zip(k_line).enumerate() {
        let (f, clamped) = line_force(position[1] - line.offset, line.kind, k, eps_line, lanes.inward(i));
        if clamped {
            out.events.push(ClampEvent::BoundaryClamp { line: i });
        }
        total = geom::add(total, f);
        out.lines.push((i, f));
    }
    out.total = total;
    Ok(out)
}

/// Sum of all vehicle and line potentials at `position`.
pub fn total_potential(
    position: Vec2,
    neighbors: &[NeighborPoint],
    k_vehicle: &[f64],
    lanes: &LaneGeometry,
    k_line: &[f64],
    r_col: f64,
    eps_line: f64,
) -> f64 {
    let vehicles: f64 = neighbors
        .iter()
        .zip(k_vehicle)
        .map(|(n, &k)| vehicle_potential(geom::sub(position, n.position), k, r_col))
        .sum();
    let lines: f64 = lanes
        .lines()
        .iter()
        .zip(k_line)
        .map(|(l, &k)| line_potential(position[1] - l.offset, l.kind, k, eps_line).0)
        .sum();
    vehicles + lines
}

/// Central finite-difference gradient of [`total_potential`], negated.
#[allow(clippy::too_many_arguments)]
pub fn numeric_repulsion(
    position: Vec2,
    neighbors: &[NeighborPoint],
    k_vehicle: &[f64],
    lanes: &LaneGeometry,
    k_line: &[f64],
    r_col: f64,
    eps_line: f64,
    h: f64,
) -> Vec2 {
    let u = |p: Vec2| total_potential(p, neighbors, k_vehicle, lanes, k_line, r_col, eps_line);
    let gx = (u([position[0] + h, position[1]]) - u([position[0] - h, position[1]])) / (2.0 * h);
    let gy = (u([position[0], position[1] + h]) - u([position[0], position[1] - h])) / (2.0 * h);
    [-gx, -gy]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajdata::LaneLine;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn desired_velocity_examples() {
        let d = desired_velocity([0.0, 0.0], [100.0, 0.0], 0, 50, 0.1).unwrap();
        assert!(close(d.v0, 20.0, 1e-12));
        assert_eq!(d.e, [1.0, 0.0]);
        assert!(close(d.v_des[0], 20.0, 1e-12) && d.v_des[1] == 0.0);
        let d = desired_velocity([3.0, 4.0], [3.0, 4.0], 0, 50, 0.1).unwrap();
        assert_eq!(d.v_des, [0.0, 0.0]);
        let d = desired_velocity([0.0, 0.0], [0.0, 10.0], 0, 100, 0.1).unwrap();
        assert!(close(d.v_des[0], 0.0, 1e-12) && close(d.v_des[1], 1.0, 1e-12));
        assert!(matches!(
            desired_velocity([0.0, 0.0], [1.0, 0.0], 5, 5, 0.1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn goal_force_examples() {
        let goal = [100.0, 0.0];
        let at_rest = VehicleState::new([0.0, 0.0], [20.0, 0.0]);
        let f = goal_force(&at_rest, goal, 0, 50, 0.1, 1.3).unwrap();
        assert!(close(f[0], 0.0, 1e-12) && f[1] == 0.0);
        let slow = VehicleState::new([0.0, 0.0], [18.0, 0.0]);
        let f = goal_force(&slow, goal, 0, 50, 0.1, 2.0).unwrap();
        assert!(close(f[0], 1.0, 1e-12));
        let f4 = goal_force(&slow, goal, 0, 50, 0.1, 4.0).unwrap();
        assert_eq!(f4[0], f[0] / 2.0);
        assert!(goal_force(&slow, goal, 0, 50, 0.1, 0.0).is_err());
    }

    #[test]
    fn potential_hand_values() {
        assert_eq!(vehicle_potential([0.0, 0.0], 1.5, 5.0), 7.5);
        assert!(close(
            vehicle_potential([2.0, 0.0], 1.0, 2.0),
            0.7357588823428847,
            1e-15
        ));
        for d in [0.3, 1.0, 4.0, 20.0] {
            assert!(vehicle_potential([2.0 * d, 0.0], 1.0, 5.0) < vehicle_potential([d, 0.0], 1.0, 5.0));
        }
        assert_eq!(line_potential(0.0, LineKind::Center, 1.0, EPS_LINE), (1.0, false));
        assert_eq!(line_potential(1.0, LineKind::Boundary, 1.0, EPS_LINE), (0.5, false));
        assert!(close(
            line_potential(2.0, LineKind::Center, 1.0, EPS_LINE).0,
            0.018_315_638_888_734_18,
            1e-15
        ));
        let (u, clamped) = line_potential(0.01, LineKind::Boundary, 1.0, EPS_LINE);
        assert!(clamped && close(u, 50.0, 1e-12));
    }

    fn road() -> LaneGeometry {
        LaneGeometry::uniform(3, 3.7).unwrap()
    }

    #[test]
    fn neighbor_behind_pushes_forward() {
        let lanes = LaneGeometry::new(
            alloc::vec![
                LaneLine {
                    offset: -50.0,
                    kind: LineKind::Boundary
                },
                LaneLine {
                    offset: 50.0,
                    kind: LineKind::Boundary
                }
            ],
            1,
        )
        .unwrap();
        let n = [NeighborPoint {
            id: 7,
            position: [-5.0, 0.0],
        }];
        let r = repulsion_force([0.0, 0.0], &n, &[1.0], &lanes, &[1.0, 1.0], 5.0, EPS_LINE).unwrap();
        assert!(r.vehicles[0].1[0] > 0.0);
        assert_eq!(r.vehicles[0].1[1], 0.0);
    }

    #[test]
    fn symmetric_center_lines_cancel() {
        let lanes = LaneGeometry::new(
            alloc::vec![
                LaneLine {
                    offset: -10.0,
                    kind: LineKind::Boundary
                },
                LaneLine {
                    offset: -1.85,
                    kind: LineKind::Center
                },
                LaneLine {
                    offset: 1.85,
                    kind: LineKind::Center
                },
                LaneLine {
                    offset: 10.0,
                    kind: LineKind::Boundary
                },
            ],
            1,
        )
        .unwrap();
        let r = repulsion_force([0.0, 0.0], &[], &[], &lanes, &[1.0, 2.0, 2.0, 1.0], 5.0, EPS_LINE).unwrap();
        assert!(r.total[1].abs() < 1e-12);
        assert!(r.lines[1].1[1] > 0.0 && r.lines[2].1[1] < 0.0);
    }

    #[test]
    fn coincident_neighbor_falls_back_laterally() {
        let lanes = road();
        let n = [NeighborPoint {
            id: 3,
            position: [0.0, 5.0],
        }];
        let r = repulsion_force([0.0, 5.0], &n, &[1.0], &lanes, &[1.0; 4], 5.0, EPS_LINE).unwrap();
        assert_eq!(r.events, alloc::vec![ClampEvent::CoincidentVehicle { id: 3 }]);
        let f = r.vehicles[0].1;
        assert_eq!(f[0], 0.0);
        assert!(close(f[1].abs(), libm::exp(-EPS_POS / 5.0), 1e-15));
    }

    #[test]
    fn analytic_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let lanes = road();
            let p = [rng.gen_range(-5.0..5.0), rng.gen_range(0.3..10.8)];
            let n: Vec<NeighborPoint> = (0..rng.gen_range(0..=8))
                .map(|i| {
                    let d = rng.gen_range(0.2..50.0);
                    let a = rng.gen_range(0.0..core::f64::consts::TAU);
                    NeighborPoint {
                        id: i,
                        position: [p[0] + d * libm::cos(a), p[1] + d * libm::sin(a)],
                    }
                })
                .collect();
            let kv: Vec<f64> = n.iter().map(|_| rng.gen_range(0.01..5.0)).collect();
            let kl: Vec<f64> = (0..4).map(|_| rng.gen_range(0.01..5.0)).collect();
            let r = repulsion_force(p, &n, &kv, &lanes, &kl, 5.0, EPS_LINE).unwrap();
            let fd = numeric_repulsion(p, &n, &kv, &lanes, &kl, 5.0, EPS_LINE, 1e-6);
            let scale: f64 = r
                .vehicles
                .iter()
                .map(|v| geom::norm(v.1))
                .chain(r.lines.iter().map(|l| geom::norm(l.1)))
                .sum();
            assert!(geom::dist(r.total, fd) <= 1e-5 * scale, "{:?} vs {:?}", r.total, fd);
        }
    }

    #[test]
    fn boundary_force_dominates_near_the_edge() {
        let vehicle_max = vehicle_force([EPS_POS, 0.0], 5.0, 5.0, [0.0, 1.0]).0;
        let mut last = 0.0;
        for d in [2.0, 1.0, 0.5, 0.25, 0.15, 0.1] {
            let f = line_force(d, LineKind::Boundary, 1.0, EPS_LINE, 1.0).0[1];
            assert!(f > last);
            last = f;
        }
        assert!(last > geom::norm(vehicle_max));
    }

    #[test]
    fn rotating_the_scene_negates_forces() {
        let lanes = road();
        let flipped = lanes.transformed(0.0, true);
        let n = [
            NeighborPoint {
                id: 1,
                position: [8.0, 2.0],
            },
            NeighborPoint {
                id: 2,
                position: [-3.0, 6.0],
            },
        ];
        let nf: Vec<NeighborPoint> = n
            .iter()
            .map(|x| NeighborPoint {
                id: x.id,
                position: [-x.position[0], -x.position[1]],
            })
            .collect();
        let p = [1.0, 4.0];
        let kl = [1.0, 2.0, 3.0, 4.0];
        let klf = [4.0, 3.0, 2.0, 1.0];
        let a = repulsion_force(p, &n, &[1.0, 2.0], &lanes, &kl, 5.0, EPS_LINE).unwrap();
        let b = repulsion_force([-p[0], -p[1]], &nf, &[1.0, 2.0], &flipped, &klf, 5.0, EPS_LINE).unwrap();
        for (x, y) in a.vehicles.iter().zip(&b.vehicles) {
            assert_eq!(y.1, [-x.1[0], -x.1[1]]);
        }
        for (i, x) in a.lines.iter().enumerate() {
            let y = b.lines[3 - i].1;
            assert_eq!(y, [-x.1[0], -x.1[1]]);
        }
    }
}

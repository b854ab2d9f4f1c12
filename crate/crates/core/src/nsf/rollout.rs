use alloc::format;
use alloc::vec::Vec;

use super::forces::{away_from_lane, desired_velocity, ClampEvent, EPS_POS};
use super::nets::{ForceNets, HISTORY};
use crate::error::{Error, Result};
use crate::geom::{self, Vec2};
use crate::nn::{Graph, Tensor, Var};
use crate::trajdata::{LaneGeometry, LineKind, TrajectoryWindow, VehicleState};

/// Source of the relaxation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauMode {
    Network,
    Fixed(f64),
}

/// Source of the interaction strengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KMode {
    Network,
    Fixed { vehicle: f64, line: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutOptions {
    pub repulsion: bool,
    pub tau: TauMode,
    pub k: KMode,
}

impl RolloutOptions {
    /// Both forces, both networks.
    pub const FULL: Self = Self {
        repulsion: true,
        tau: TauMode::Network,
        k: KMode::Network,
    };
    /// Goal attraction only.
    pub const GOAL_ONLY: Self = Self {
        repulsion: false,
        tau: TauMode::Network,
        k: KMode::Network,
    };
}

/// Everything a rollout needs besides the goal, in the normalized frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub observed: Vec<VehicleState>,
    /// Last observed state of each neighbor.
    pub neighbors: Vec<(u64, VehicleState)>,
    pub lanes: LaneGeometry,
    pub dt: f64,
    pub t_pred: usize,
}

impl Scene {
    pub fn from_window(window: &TrajectoryWindow, lanes: &LaneGeometry) -> Self {
        Self {
            observed: window.observed.clone(),
            neighbors: window
                .neighbors
                .iter()
                .filter_map(|n| n.observed.last().map(|s| (n.vehicle_id, *s)))
                .collect(),
            lanes: lanes.clone(),
            dt: window.dt,
            t_pred: window.t_pred(),
        }
    }

    /// Constant-velocity position of neighbor `j` after `step` frames.
    pub fn neighbor_position(&self, j: usize, step: usize) -> Vec2 {
        let s = &self.neighbors[j].1;
        geom::add(s.position, geom::scale(s.velocity, step as f64 * self.dt))
    }
}

/// Per-step force record.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ForceBreakdown {
    pub step: usize,
    pub position: Vec2,
    pub velocity: Vec2,
    pub f_goal: Vec2,
    pub f_rep_vehicles: Vec<(u64, Vec2)>,
    pub f_rep_lines: Vec<(usize, Vec2)>,
    /// Sum of the vehicle then line components, in that order.
    pub f_rep: Vec2,
    /// `f_goal + f_rep`.
    pub acceleration: Vec2,
    pub tau: f64,
    pub k_vehicle: Vec<f64>,
    pub k_line: Vec<f64>,
    pub v0: f64,
    pub e: Vec2,
    pub neighbor_positions: Vec<(u64, Vec2)>,
    pub events: Vec<ClampEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    pub positions: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub breakdowns: Vec<ForceBreakdown>,
}

pub(crate) struct GraphRollout {
    pub positions: Vec<Var>,
    pub result: RolloutResult,
}

fn vec2(g: &Graph, v: Var) -> Vec2 {
    let d = g.value(v).data();
    [d[0], d[1]]
}

fn diverged(step: usize, last: Option<&ForceBreakdown>) -> impl FnOnce(Error) -> Error + '_ {
    move |e| match e {
        Error::NonFinite { .. } => Error::RolloutDiverged {
            step,
            last: format!("{last:?}"),
        },
        other => other,
    }
}

/// Unrolls the Euler integrator on `g`, returning the position node of every
/// predicted frame along with plain values.
pub(crate) fn rollout_graph(
    g: &mut Graph,
    nets: &ForceNets,
    scene: &Scene,
    goal: Vec2,
    opts: RolloutOptions,
) -> Result<GraphRollout> {
    let start = scene
        .observed
        .last()
        .ok_or_else(|| Error::InvalidArgument("scene has no observed state".into()))?;
    if !(scene.dt > 0.0) || scene.t_pred == 0 {
        return Err(Error::InvalidArgument(format!(
            "invalid rollout horizon {} with dt {}",
            scene.t_pred, scene.dt
        )));
    }
    let cfg = &nets.config;
    let dt = scene.dt;
    let goal_var = g.input(Tensor::row(&goal))?;
    let zero = g.input(Tensor::scalar(0.0))?;

    let mut history: Vec<(Var, Var)> = Vec::with_capacity(HISTORY + 1 + scene.t_pred);
    let first = scene.observed.len().saturating_sub(HISTORY + 1);
    let mut recent: Vec<&VehicleState> = scene.observed[first..].iter().collect();
    while recent.len() < HISTORY + 1 {
        recent.insert(0, recent[0]);
    }
    for s in recent {
        history.push((g.input(Tensor::row(&s.position))?, g.input(Tensor::row(&s.velocity))?));
    }
    let (mut p, mut v) = *history.last().expect("non-empty history");
    debug_assert_eq!(vec2(g, p), start.position);

    let mut positions = Vec::with_capacity(scene.t_pred);
    let mut result = RolloutResult {
        positions: Vec::with_capacity(scene.t_pred),
        velocities: Vec::with_capacity(scene.t_pred),
        breakdowns: Vec::with_capacity(scene.t_pred),
    };

    for step in 0..scene.t_pred {
        let remaining = (scene.t_pred - step) as f64 * dt;
        let last = result.breakdowns.last();
        let outcome: Result<(Var, Var, ForceBreakdown)> = (|| {
            let tau = match opts.tau {
                TauMode::Network => {
                    nets.tau_graph(g, &history[history.len() - (HISTORY + 1)..], goal_var, remaining)?
                }
                TauMode::Fixed(t) => {
                    if !(t > 0.0) {
                        return Err(Error::Contract(format!("tau must be positive (got {t})")));
                    }
                    g.input(Tensor::scalar(t))?
                }
            };
            let to_goal = g.sub(goal_var, p)?;
            let v_des = g.scale(to_goal, 1.0 / remaining)?;
            let dv = g.sub(v_des, v)?;
            let inv_tau = g.recip(tau)?;
            let f_goal = g.mul_scalar(dv, inv_tau)?;

            let pv = vec2(g, p);
            let desired = desired_velocity(pv, goal, step, scene.t_pred, dt)?;
            let mut record = ForceBreakdown {
                step,
                position: pv,
                velocity: vec2(g, v),
                f_goal: vec2(g, f_goal),
                f_rep_vehicles: Vec::new(),
                f_rep_lines: Vec::new(),
                f_rep: [0.0, 0.0],
                acceleration: [0.0, 0.0],
                tau: g.scalar(tau),
                k_vehicle: Vec::new(),
                k_line: Vec::new(),
                v0: desired.v0,
                e: desired.e,
                neighbor_positions: Vec::new(),
                events: Vec::new(),
            };

            let acc = if opts.repulsion {
                let mut qs = Vec::with_capacity(scene.neighbors.len());
                for j in 0..scene.neighbors.len() {
                    let q = scene.neighbor_position(j, step);
                    record.neighbor_positions.push((scene.neighbors[j].0, q));
                    qs.push((g.input(Tensor::row(&q))?, scene.neighbors[j].1.velocity));
                }
                let (kv, kl) = match opts.k {
                    KMode::Network => {
                        let k = nets.k_graph(g, p, v, &qs, &scene.lanes)?;
                        (k.vehicle, k.line)
                    }
                    KMode::Fixed { vehicle, line } => {
                        let kv = if qs.is_empty() {
                            None
                        } else {
                            Some(g.input(Tensor::filled(qs.len(), 1, vehicle))?)
                        };
                        (kv, g.input(Tensor::filled(scene.lanes.lines().len(), 1, line))?)
                    }
                };
                record.k_vehicle = kv.map(|k| g.value(k).data().to_vec()).unwrap_or_default();
                record.k_line = g.value(kl).data().to_vec();

                let mut parts: Vec<Var> = Vec::new();
                for (j, &(q, _)) in qs.iter().enumerate() {
                    let k = g.slice_rows(kv.expect("neighbors present"), j, 1)?;
                    let r = g.sub(p, q)?;
                    let rv = vec2(g, r);
                    let f = if geom::norm(rv) < EPS_POS {
                        let id = scene.neighbors[j].0;
                        record.events.push(ClampEvent::CoincidentVehicle { id });
                        let dir = away_from_lane(pv[1], record.neighbor_positions[j].1[1], &scene.lanes);
                        let dir = g.input(Tensor::row(&geom::scale(dir, libm::exp(-EPS_POS / cfg.r_col))))?;
                        g.mul_scalar(dir, k)?
                    } else {
                        let sq = g.mul(r, r)?;
                        let sq = g.sum(sq)?;
                        let n = g.sqrt(sq)?;
                        let decay = g.scale(n, -1.0 / cfg.r_col)?;
                        let decay = g.exp(decay)?;
                        let inv = g.recip(n)?;
                        let coef = g.mul(k, decay)?;
                        let coef = g.mul(coef, inv)?;
                        g.mul_scalar(r, coef)?
                    };
                    record.f_rep_vehicles.push((scene.neighbors[j].0, vec2(g, f)));
                    parts.push(f);
                }
                let y = g.slice_cols(p, 1, 1)?;
                for (i, line) in scene.lanes.lines().iter().enumerate() {
                    let k = g.slice_rows(kl, i, 1)?;
                    let offset = g.input(Tensor::scalar(line.offset))?;
                    let d = g.sub(y, offset)?;
                    let dv = g.scalar(d);
                    let fy = match line.kind {
                        LineKind::Center => {
                            let d2 = g.mul(d, d)?;
                            let d2 = g.scale(d2, -1.0)?;
                            let decay = g.exp(d2)?;
                            let m = g.mul(d, decay)?;
                            let m = g.mul(m, k)?;
                            g.scale(m, 2.0)?
                        }
                        LineKind::Boundary if libm::fabs(dv) < cfg.eps_line => {
                            record.events.push(ClampEvent::BoundaryClamp { line: i });
                            let sign = if dv > 0.0 {
                                1.0
                            } else if dv < 0.0 {
                                -1.0
                            } else {
                                scene.lanes.inward(i)
                            };
                            g.scale(k, sign / (cfg.eps_line * cfg.eps_line * cfg.eps_line))?
                        }
                        LineKind::Boundary => {
                            let inv3 = g.powi(d, -3)?;
                            g.mul(k, inv3)?
                        }
                    };
                    let f = g.concat_cols(&[zero, fy])?;
                    record.f_rep_lines.push((i, vec2(g, f)));
                    parts.push(f);
                }
                match parts.split_first() {
                    Some((&first, rest)) => {
                        let mut rep = first;
                        for &part in rest {
                            rep = g.add(rep, part)?;
                        }
                        record.f_rep = vec2(g, rep);
                        g.add(f_goal, rep)?
                    }
                    None => f_goal,
                }
            } else {
                f_goal
            };
            record.acceleration = vec2(g, acc);

            let dp = g.scale(v, dt)?;
            let p_next = g.add(p, dp)?;
            let da = g.scale(acc, dt)?;
            let v_next = g.add(v, da)?;
            Ok((p_next, v_next, record))
        })();
        let (p_next, v_next, record) = outcome.map_err(diverged(step, last))?;
        p = p_next;
        v = v_next;
        history.push((p, v));
        positions.push(p);
        result.positions.push(vec2(g, p));
        result.velocities.push(vec2(g, v));
        result.breakdowns.push(record);
    }
    Ok(GraphRollout { positions, result })
}

/// Predicts the future toward `goal`.
pub fn rollout(nets: &ForceNets, scene: &Scene, goal: Vec2, opts: RolloutOptions) -> Result<RolloutResult> {
    let mut g = Graph::new();
    Ok(rollout_graph(&mut g, nets, scene, goal, opts)?.result)
}

#[cfg(test)]
mod tests {
    use super::super::{repulsion_force, NeighborPoint, NsfConfig};
    use super::*;
    use crate::trajdata::LaneLine;
    use alloc::vec;

    fn straight_scene(v: Vec2, t_pred: usize) -> Scene {
        let observed = (0..10)
            .map(|i| {
                let t = (i as f64 - 9.0) * 0.1;
                VehicleState::new([v[0] * t, v[1] * t], v)
            })
            .collect();
        Scene {
            observed,
            neighbors: vec![],
            lanes: LaneGeometry::new(
                vec![
                    LaneLine {
                        offset: -100.0,
                        kind: LineKind::Boundary,
                    },
                    LaneLine {
                        offset: 100.0,
                        kind: LineKind::Boundary,
                    },
                ],
                1,
            )
            .unwrap(),
            dt: 0.1,
            t_pred,
        }
    }

    fn nets() -> ForceNets {
        ForceNets::new(NsfConfig {
            tau_hidden: 8,
            k_hidden: 8,
            ..NsfConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn optimal_velocity_goes_straight_to_goal() {
        let scene = straight_scene([25.0, 0.0], 50);
        let goal = [25.0 * 5.0, 0.0];
        let out = rollout(&nets(), &scene, goal, RolloutOptions::GOAL_ONLY).unwrap();
        for (i, p) in out.positions.iter().enumerate() {
            assert!((p[0] - 2.5 * (i + 1) as f64).abs() < 1e-9);
            assert!(p[1].abs() < 1e-12);
        }
        assert!(geom::dist(*out.positions.last().unwrap(), goal) <= 25.0 * 0.1);
    }

    #[test]
    fn velocity_error_shrinks_from_rest() {
        let scene = straight_scene([0.0, 0.0], 50);
        let opts = RolloutOptions {
            repulsion: false,
            tau: TauMode::Fixed(0.5),
            k: KMode::Network,
        };
        let out = rollout(&nets(), &scene, [100.0, 0.0], opts).unwrap();
        let mut v = scene.observed.last().unwrap().velocity;
        for (b, v_next) in out.breakdowns.iter().zip(&out.velocities) {
            let v_des = geom::scale(b.e, b.v0);
            let before = geom::dist(v, v_des);
            let after = geom::dist(*v_next, v_des);
            assert!(after < before, "step {}: {after} >= {before}", b.step);
            assert!((after - (1.0 - 0.1 / 0.5) * before).abs() < 1e-9 * (1.0 + before));
            v = *v_next;
        }
    }

    #[test]
    fn recorded_acceleration_is_the_velocity_increment() {
        let mut scene = straight_scene([24.0, 0.3], 40);
        scene.lanes = LaneGeometry::uniform(3, 3.7).unwrap();
        for o in &mut scene.observed {
            o.position[1] += 5.0;
        }
        scene.neighbors = vec![
            (9, VehicleState::new([12.0, 5.2], [22.0, 0.0])),
            (4, VehicleState::new([-9.0, 1.0], [26.0, 0.0])),
        ];
        let out = rollout(&nets(), &scene, [100.0, 8.0], RolloutOptions::FULL).unwrap();
        let mut v = scene.observed.last().unwrap().velocity;
        for (b, v_next) in out.breakdowns.iter().zip(&out.velocities) {
            for c in 0..2 {
                let fd = (v_next[c] - v[c]) / 0.1;
                assert!((fd - b.acceleration[c]).abs() <= 1e-9 * (1.0 + b.acceleration[c].abs()));
            }
            let rep = b
                .f_rep_vehicles
                .iter()
                .map(|x| x.1)
                .chain(b.f_rep_lines.iter().map(|x| x.1))
                .fold(None, |acc: Option<Vec2>, f| {
                    Some(match acc {
                        None => f,
                        Some(a) => geom::add(a, f),
                    })
                });
            let rep = rep.unwrap();
            assert_eq!(rep, b.f_rep);
            assert_eq!(geom::add(b.f_goal, rep), b.acceleration);
            v = *v_next;
        }
    }

    #[test]
    fn graph_forces_match_closed_form() {
        let mut scene = straight_scene([24.0, 0.0], 5);
        scene.lanes = LaneGeometry::uniform(3, 3.7).unwrap();
        for o in &mut scene.observed {
            o.position[1] += 4.0;
        }
        scene.neighbors = vec![(9, VehicleState::new([12.0, 5.2], [22.0, 0.0]))];
        let opts = RolloutOptions {
            repulsion: true,
            tau: TauMode::Fixed(0.8),
            k: KMode::Fixed {
                vehicle: 1.5,
                line: 0.7,
            },
        };
        let out = rollout(&nets(), &scene, [100.0, 8.0], opts).unwrap();
        for b in &out.breakdowns {
            let n = [NeighborPoint {
                id: 9,
                position: b.neighbor_positions[0].1,
            }];
            let r = repulsion_force(b.position, &n, &[1.5], &scene.lanes, &[0.7; 4], 5.0, 0.1).unwrap();
            assert!(geom::dist(r.total, b.f_rep) < 1e-12);
            let state = VehicleState::new(b.position, b.velocity);
            let fg = super::super::goal_force(&state, [100.0, 8.0], b.step, 5, 0.1, 0.8).unwrap();
            assert!(geom::dist(fg, b.f_goal) < 1e-9);
        }
    }

    #[test]
    fn goal_reaching_grid() {
        let goal = [125.0, 0.0];
        let tau = 1.0;
        for speed in [15.0, 20.0, 25.0, 30.0, 35.0] {
            for heading in [-0.2f64, -0.1, 0.0, 0.1, 0.2] {
                let v = [speed * libm::cos(heading), speed * libm::sin(heading)];
                let scene = straight_scene(v, 50);
                let opts = RolloutOptions {
                    repulsion: false,
                    tau: TauMode::Fixed(tau),
                    k: KMode::Network,
                };
                let out = rollout(&nets(), &scene, goal, opts).unwrap();
                let v0 = out.breakdowns[0].v0;
                let miss = geom::dist(*out.positions.last().unwrap(), goal);
                assert!(miss <= 2.0 * v0 * 0.1, "speed {speed} heading {heading}: miss {miss}");
            }
        }
    }

    #[test]
    fn rotated_scene_rotates_rollout_exactly() {
        let mut scene = straight_scene([24.0, 0.4], 30);
        scene.lanes = LaneGeometry::uniform(3, 3.7).unwrap();
        for o in &mut scene.observed {
            o.position[1] += 4.0;
        }
        scene.neighbors = vec![(2, VehicleState::new([15.0, 5.0], [20.0, 0.0]))];
        let mut flipped = scene.clone();
        for o in &mut flipped.observed {
            *o = VehicleState::new([-o.position[0], -o.position[1]], [-o.velocity[0], -o.velocity[1]]);
        }
        for n in &mut flipped.neighbors {
            n.1 = VehicleState::new(
                [-n.1.position[0], -n.1.position[1]],
                [-n.1.velocity[0], -n.1.velocity[1]],
            );
        }
        flipped.lanes = scene.lanes.transformed(0.0, true);
        let opts = RolloutOptions {
            repulsion: true,
            tau: TauMode::Fixed(0.9),
            k: KMode::Fixed {
                vehicle: 1.0,
                line: 1.0,
            },
        };
        let goal = [100.0, 7.7];
        let a = rollout(&nets(), &scene, goal, opts).unwrap();
        let b = rollout(&nets(), &flipped, [-goal[0], -goal[1]], opts).unwrap();
        // Step 0 sees identical inputs, so every component flips bit for bit.
        let (x, y) = (&a.breakdowns[0], &b.breakdowns[0]);
        assert_eq!(y.f_goal, [-x.f_goal[0], -x.f_goal[1]]);
        for (fx, fy) in x.f_rep_vehicles.iter().zip(&y.f_rep_vehicles) {
            assert_eq!(fy.1, [-fx.1[0], -fx.1[1]]);
        }
        let n = x.f_rep_lines.len();
        for (i, fx) in x.f_rep_lines.iter().enumerate() {
            assert_eq!(y.f_rep_lines[n - 1 - i].1, [-fx.1[0], -fx.1[1]]);
        }
        // Line order is reversed by the flip, so sums may differ in the last bit.
        for (p, q) in a.positions.iter().zip(&b.positions) {
            assert!(geom::dist(*p, [-q[0], -q[1]]) < 1e-9);
        }
    }
}

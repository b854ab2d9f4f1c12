use alloc::string::String;
use alloc::vec::Vec;

use super::{baseline_ca, baseline_cv, best_of_k, BestOfK, MetricAccumulator, MetricReport};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::goalnet::{
    sample_goals, train_goalnet, GoalHypothesisSet, GoalNet, GoalNetConfig, GoalSample, GoalTraining,
};
use crate::modes::{fit_modes, IntentionModeSet};
use crate::nsf::{rollout, train_phase, ForceNets, NsfConfig, NsfSample, Phase, RolloutOptions, Scene};
use crate::synthgen::Maneuver;
use crate::trajdata::PreparedSample;

/// Everything needed to turn a normalized window into K trajectories.
#[derive(Debug, Clone, Copy)]
pub struct Predictor<'a> {
    pub modes: &'a IntentionModeSet,
    pub goalnet: &'a GoalNet,
    pub nets: &'a ForceNets,
    pub options: RolloutOptions,
    /// Requested hypothesis count; capped at the number of modes.
    pub k: usize,
}

/// K rolled-out hypotheses for one window, in the normalized frame.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPrediction {
    pub goals: GoalHypothesisSet,
    pub trajectories: Vec<Vec<Vec2>>,
    pub scores: BestOfK,
}

impl Predictor<'_> {
    pub fn effective_k(&self) -> usize {
        self.k.min(self.modes.len())
    }

    pub fn predict(&self, sample: &PreparedSample) -> Result<WindowPrediction> {
        let input = GoalSample::from_window(&sample.window, self.goalnet.config.max_neighbors);
        let goals = sample_goals(self.goalnet, self.modes, &input, self.effective_k())?;
        let scene = Scene::from_window(&sample.window, &sample.lanes);
        let trajectories = goals
            .goals
            .iter()
            .map(|g| rollout(self.nets, &scene, *g, self.options).map(|r| r.positions))
            .collect::<Result<Vec<_>>>()?;
        let scores = best_of_k(
            &sample.window.future_positions(),
            &trajectories,
            &goals.renormalized,
            sample.window.dt,
        )?;
        Ok(WindowPrediction {
            goals,
            trajectories,
            scores,
        })
    }
}

/// Lateral displacement from the first observed to the last future point.
fn maneuver_of(sample: &PreparedSample, lane_width: f64) -> Maneuver {
    let w = &sample.window;
    Maneuver::classify(w.goal()[1] - w.observed[0].position[1], lane_width)
}

/// Reports over all windows and over lane-change windows only.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evaluation {
    pub all: MetricReport,
    pub lane_change: MetricReport,
}

struct SplitAccumulator {
    all: MetricAccumulator,
    lane_change: MetricAccumulator,
}

impl SplitAccumulator {
    fn new(k: usize) -> Self {
        Self {
            all: MetricAccumulator::new(k),
            lane_change: MetricAccumulator::new(k),
        }
    }

    fn push(&mut self, r: &BestOfK, maneuver: Maneuver) {
        self.all.push(r);
        if maneuver != Maneuver::Straight {
            self.lane_change.push(r);
        }
    }

    fn finish(&self) -> Evaluation {
        Evaluation {
            all: self.all.report(),
            lane_change: self.lane_change.report(),
        }
    }
}

/// Best-of-K evaluation over `samples`. Lane changes are windows whose
/// lateral displacement exceeds half a lane width.
pub fn evaluate(predictor: &Predictor<'_>, samples: &[PreparedSample], lane_width: f64) -> Result<Evaluation> {
    evaluate_with(predictor, samples, lane_width, |_, _| {})
}

/// [`evaluate`], handing every window's prediction to `visit` in order.
pub fn evaluate_with(
    predictor: &Predictor<'_>,
    samples: &[PreparedSample],
    lane_width: f64,
    mut visit: impl FnMut(usize, &WindowPrediction),
) -> Result<Evaluation> {
    let mut acc = SplitAccumulator::new(predictor.effective_k());
    for (i, s) in samples.iter().enumerate() {
        let p = predictor.predict(s)?;
        acc.push(&p.scores, maneuver_of(s, lane_width));
        visit(i, &p);
    }
    Ok(acc.finish())
}

/// Single-hypothesis evaluation of a kinematic baseline such as
/// [`baseline_cv`].
pub fn evaluate_baseline(
    samples: &[PreparedSample],
    lane_width: f64,
    f: fn(&[Vec2], usize) -> Result<Vec<Vec2>>,
) -> Result<Evaluation> {
    let mut acc = SplitAccumulator::new(1);
    for s in samples {
        let w = &s.window;
        let pred = f(&w.observed_positions(), w.t_pred())?;
        acc.push(
            &best_of_k(&w.future_positions(), &[pred], &[1.0], w.dt)?,
            maneuver_of(s, lane_width),
        );
    }
    Ok(acc.finish())
}

/// A row of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variant {
    pub index: usize,
    pub intention_modes: bool,
    pub goal_force: bool,
    pub repulsion: bool,
}

impl Variant {
    /// The four rows in table order; the last one is the full model.
    pub const GRID: [Variant; 4] = [
        Variant {
            index: 1,
            intention_modes: false,
            goal_force: true,
            repulsion: true,
        },
        Variant {
            index: 2,
            intention_modes: false,
            goal_force: true,
            repulsion: false,
        },
        Variant {
            index: 3,
            intention_modes: true,
            goal_force: true,
            repulsion: false,
        },
        Variant {
            index: 4,
            intention_modes: true,
            goal_force: true,
            repulsion: true,
        },
    ];

    pub fn label(&self) -> String {
        let mark = |b: bool| if b { "yes" } else { "no" };
        alloc::format!(
            "({}) IM={} F_goal={} F_rep={}",
            self.index,
            mark(self.intention_modes),
            mark(self.goal_force),
            mark(self.repulsion)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub goalnet: GoalNetConfig,
    pub nsf: NsfConfig,
    pub modes: usize,
    pub k: usize,
    pub lane_width: f64,
    /// Train the force model toward true endpoints. Otherwise each training
    /// window uses the predicted goal closest to its true endpoint.
    pub oracle_goals: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub constant_velocity: Evaluation,
    pub constant_acceleration: Evaluation,
    pub goal_training: GoalTraining,
    pub single_mode_training: GoalTraining,
    pub phase1: Vec<f64>,
    pub phase2: Vec<f64>,
    /// Mode set used by the variants with intention modes.
    pub modes: IntentionModeSet,
}

/// The top-`k` hypothesis closest to `truth`.
pub fn nearest_predicted_goal(
    net: &GoalNet,
    modes: &IntentionModeSet,
    sample: &GoalSample,
    k: usize,
    truth: Vec2,
) -> Result<Vec2> {
    let set = sample_goals(net, modes, sample, k.min(modes.len()))?;
    let mut best = set.goals[0];
    for g in &set.goals[1..] {
        if crate::geom::dist_sq(*g, truth) < crate::geom::dist_sq(best, truth) {
            best = *g;
        }
    }
    Ok(best)
}

/// Trains both sub-modules once per ingredient and evaluates every variant of
/// the grid on `test`.
///
/// Variants without intention modes use a single mean-future mode. Variants
/// without repulsion roll out with the networks as they stood after the first
/// training phase; the others use the networks after the second phase.
pub fn run_ablation(train: &[PreparedSample], test: &[PreparedSample], cfg: &AblationConfig) -> Result<AblationReport> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidArgument(
            "ablation needs non-empty train and test sets".into(),
        ));
    }
    let futures: Vec<Vec<Vec2>> = train.iter().map(|s| s.window.future_positions()).collect();
    let modes = fit_modes(&futures, cfg.modes, cfg.seed)?.modes;
    let single = fit_modes(&futures, 1, cfg.seed)?.modes;

    let goal_samples: Vec<GoalSample> = train
        .iter()
        .map(|s| GoalSample::from_window(&s.window, cfg.goalnet.max_neighbors))
        .collect();
    let mut with_modes = GoalNet::new(cfg.goalnet.clone())?;
    let goal_training = train_goalnet(&mut with_modes, &modes, &goal_samples)?;
    let mut without_modes = GoalNet::new(cfg.goalnet.clone())?;
    let single_mode_training = train_goalnet(&mut without_modes, &single, &goal_samples)?;

    let mut nsf_samples: Vec<NsfSample> = train.iter().map(NsfSample::from_prepared).collect();
    if !cfg.oracle_goals {
        for (s, g) in nsf_samples.iter_mut().zip(&goal_samples) {
            s.goal = nearest_predicted_goal(&with_modes, &modes, g, cfg.k, s.goal)?;
        }
    }
    let mut goal_only = ForceNets::new(cfg.nsf.clone())?;
    let (phase1, _) = train_phase(&mut goal_only, &nsf_samples, Phase::Goal, cfg.nsf.phase1_epochs)?;
    let mut full = goal_only.clone();
    let (phase2, _) = train_phase(&mut full, &nsf_samples, Phase::Repulsion, cfg.nsf.phase2_epochs)?;

    let mut rows = Vec::with_capacity(Variant::GRID.len());
    for variant in Variant::GRID {
        let (mode_set, goalnet) = if variant.intention_modes {
            (&modes, &with_modes)
        } else {
            (&single, &without_modes)
        };
        let (nets, options) = if variant.repulsion {
            (&full, RolloutOptions::FULL)
        } else {
            (&goal_only, RolloutOptions::GOAL_ONLY)
        };
        let predictor = Predictor {
            modes: mode_set,
            goalnet,
            nets,
            options,
            k: cfg.k,
        };
        rows.push(AblationRow {
            variant,
            evaluation: evaluate(&predictor, test, cfg.lane_width)?,
        });
    }

    Ok(AblationReport {
        rows,
        constant_velocity: evaluate_baseline(test, cfg.lane_width, baseline_cv)?,
        constant_acceleration: evaluate_baseline(test, cfg.lane_width, baseline_ca)?,
        goal_training,
        single_mode_training,
        phase1,
        phase2,
        modes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajdata::{prepare, LaneGeometry, TrajectoryWindow, VehicleState};
    use alloc::vec;

    fn sample(dy: f64, speed: f64) -> PreparedSample {
        let lanes = LaneGeometry::uniform(3, 3.7).unwrap();
        let y0 = 5.55;
        let state = |i: usize| {
            let t = i as f64 * 0.1;
            let frac = if i < 10 { 0.0 } else { ((i - 10) as f64 / 19.0).min(1.0) };
            VehicleState::new([speed * t, y0 + dy * frac], [speed, 0.0])
        };
        let w = TrajectoryWindow {
            vehicle_id: 1,
            start_frame: 0,
            observed: (0..10).map(state).collect(),
            future: (10..30).map(state).collect(),
            neighbors: vec![],
            lane_ref: 0,
            dt: 0.1,
        };
        prepare(&w, &lanes)
    }

    fn tiny_config() -> AblationConfig {
        AblationConfig {
            goalnet: GoalNetConfig {
                t_obs: 10,
                t_pred: 20,
                d_model: 8,
                heads: 2,
                blocks: 1,
                ffn: 16,
                epochs: 3,
                batch_size: 4,
                max_neighbors: 2,
                ..GoalNetConfig::default()
            },
            nsf: NsfConfig {
                tau_hidden: 8,
                k_hidden: 8,
                phase1_epochs: 2,
                phase2_epochs: 2,
                batch_size: 4,
                ..NsfConfig::default()
            },
            modes: 3,
            k: 2,
            lane_width: 3.7,
            oracle_goals: true,
            seed: 5,
        }
    }

    #[test]
    fn grid_matches_table_rows() {
        let g = Variant::GRID;
        assert_eq!(g.map(|v| v.index), [1, 2, 3, 4]);
        assert_eq!(g.map(|v| v.intention_modes), [false, false, true, true]);
        assert_eq!(g.map(|v| v.repulsion), [true, false, false, true]);
        assert!(g.iter().all(|v| v.goal_force));
        assert_eq!(g[3].label(), "(4) IM=yes F_goal=yes F_rep=yes");
    }

    #[test]
    fn ablation_is_deterministic() {
        let data: Vec<PreparedSample> = (0..12)
            .map(|i| sample([0.0, 3.7, -3.7][i % 3], 20.0 + i as f64))
            .collect();
        let cfg = tiny_config();
        let a = run_ablation(&data[..9], &data[9..], &cfg).unwrap();
        let b = run_ablation(&data[..9], &data[9..], &cfg).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.rows.len(), 4);
        assert_eq!(a.rows[0].evaluation.all.k, 1);
        assert_eq!(a.rows[3].evaluation.all.k, 2);
        assert_eq!(a.rows[3].evaluation.all.samples, 3);
        assert_eq!(a.rows[3].evaluation.lane_change.samples, 2);
        assert!(a.rows.iter().all(|r| r.evaluation.all.ade.is_finite()));
    }

    #[test]
    fn k_one_matches_single_prediction() {
        let data: Vec<PreparedSample> = (0..9)
            .map(|i| sample([0.0, 3.7, -3.7][i % 3], 22.0 + i as f64))
            .collect();
        let cfg = tiny_config();
        let futures: Vec<Vec<Vec2>> = data.iter().map(|s| s.window.future_positions()).collect();
        let modes = fit_modes(&futures, 3, 1).unwrap().modes;
        let net = GoalNet::new(cfg.goalnet.clone()).unwrap();
        let nets = ForceNets::new(cfg.nsf.clone()).unwrap();
        let p = Predictor {
            modes: &modes,
            goalnet: &net,
            nets: &nets,
            options: RolloutOptions::FULL,
            k: 1,
        };
        let out = p.predict(&data[1]).unwrap();
        let scene = Scene::from_window(&data[1].window, &data[1].lanes);
        let direct = rollout(&nets, &scene, out.goals.goals[0], RolloutOptions::FULL)
            .unwrap()
            .positions;
        let truth = data[1].window.future_positions();
        assert_eq!(out.scores.best_scores.ade, super::super::ade(&truth, &direct).unwrap());
        assert_eq!(out.scores.weighted, out.scores.best_scores);
    }
}

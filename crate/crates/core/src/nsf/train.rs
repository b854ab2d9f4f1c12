use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::nets::ForceNets;
use super::rollout::{rollout_graph, RolloutOptions, Scene};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::nn::{Adam, Graph, ParamId, Tensor, Var};
use crate::trajdata::PreparedSample;

/// One training window: scene, true future positions and the goal to roll
/// toward.
#[derive(Debug, Clone, PartialEq)]
pub struct NsfSample {
    pub scene: Scene,
    pub truth: Vec<Vec2>,
    pub goal: Vec2,
}

impl NsfSample {
    /// Uses the true endpoint as the goal.
    pub fn from_prepared(p: &PreparedSample) -> Self {
        Self {
            scene: Scene::from_window(&p.window, &p.lanes),
            truth: p.window.future_positions(),
            goal: p.window.goal(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Relaxation network only, repulsion disabled.
    Goal,
    /// Strength networks (and optionally the relaxation network) with all
    /// forces.
    Repulsion,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Goal => "phase1",
            Phase::Repulsion => "phase2",
        }
    }
}

/// Per-epoch mean losses of both phases.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NsfTraining {
    pub phase1: Vec<f64>,
    pub phase2: Vec<f64>,
    /// Phase and epoch at which training diverged; the parameters of the
    /// last completed epoch are kept.
    pub diverged: Option<(Phase, usize)>,
}

/// Mean squared displacement of a rollout against the truth.
pub fn rollout_loss(g: &mut Graph, nets: &ForceNets, sample: &NsfSample, opts: RolloutOptions) -> Result<Var> {
    if sample.truth.len() != sample.scene.t_pred {
        return Err(Error::Shape {
            op: "rollout_loss",
            left: [sample.truth.len(), 2],
            right: [sample.scene.t_pred, 2],
        });
    }
    let out = rollout_graph(g, nets, &sample.scene, sample.goal, opts)?;
    let pred = g.concat_rows(&out.positions)?;
    let truth = g.input(Tensor::from_rows(&sample.truth)?)?;
    let diff = g.sub(pred, truth)?;
    let sq = g.mul(diff, diff)?;
    let total = g.sum(sq)?;
    g.scale(total, 1.0 / sample.truth.len() as f64)
}

/// Runs `epochs` epochs of one phase. Returns the per-epoch mean losses and
/// the failing epoch if training diverged.
pub fn train_phase(
    nets: &mut ForceNets,
    samples: &[NsfSample],
    phase: Phase,
    epochs: usize,
) -> Result<(Vec<f64>, Option<usize>)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no training samples".into()));
    }
    let cfg = nets.config.clone();
    let opts = match phase {
        Phase::Goal => RolloutOptions::GOAL_ONLY,
        Phase::Repulsion => RolloutOptions::FULL,
    };
    let trainable: Vec<bool> = nets
        .store
        .ids()
        .map(|id| match phase {
            Phase::Goal => nets.is_tau_param(id),
            Phase::Repulsion => nets.is_k_param(id) || (cfg.joint_phase2 && nets.is_tau_param(id)),
        })
        .collect();
    let salt = match phase {
        Phase::Goal => 0x0001,
        Phase::Repulsion => 0x0002,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (0xF0CE_0000 | salt));
    let mut adam = Adam::new(cfg.learning_rate).with_clip(cfg.clip_norm);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut curve = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let snapshot = nets.store.clone();
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let result: Result<()> = (|| {
            for batch in order.chunks(cfg.batch_size) {
                nets.store.zero_grads();
                for &i in batch {
                    let mut g = Graph::new();
                    let loss = rollout_loss(&mut g, nets, &samples[i], opts)?;
                    sum += g.scalar(loss);
                    let grads = g.backward(loss)?;
                    g.accumulate_param_grads(&grads, &mut nets.store);
                }
                nets.store.scale_grads(1.0 / batch.len() as f64);
                adam.step(&mut nets.store, |id: ParamId| trainable[id.index()])?;
            }
            Ok(())
        })();
        match result {
            Ok(()) if sum.is_finite() => curve.push(sum / samples.len() as f64),
            Ok(())
            | Err(Error::NonFinite { .. })
            | Err(Error::NonFiniteGradient { .. })
            | Err(Error::RolloutDiverged { .. }) => {
                nets.store = snapshot;
                return Ok((curve, Some(epoch)));
            }
            Err(e) => return Err(e),
        }
    }
    Ok((curve, None))
}

/// Progressive training: the relaxation network with repulsion off, then
/// the strength networks with every force on.
pub fn train_nsf(nets: &mut ForceNets, samples: &[NsfSample]) -> Result<NsfTraining> {
    let mut out = NsfTraining::default();
    let (c1, d1) = train_phase(nets, samples, Phase::Goal, nets.config.phase1_epochs)?;
    out.phase1 = c1;
    if let Some(epoch) = d1 {
        out.diverged = Some((Phase::Goal, epoch));
        return Ok(out);
    }
    let (c2, d2) = train_phase(nets, samples, Phase::Repulsion, nets.config.phase2_epochs)?;
    out.phase2 = c2;
    out.diverged = d2.map(|e| (Phase::Repulsion, e));
    Ok(out)
}

//! Goal prediction: mode and observation embeddings, a mode-level
//! transformer encoder, a social decoder attending over neighbors, and
//! probability and goal heads.
//!
//! All inputs are expected in the normalized frame produced by
//! [`crate::trajdata::normalize`]. Samples are processed one at a time; a
//! batch is a loop over samples with gradients summed in sample order.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::modes::{nearest_mode, soft_probabilities, IntentionModeSet, ModeQuery};
use crate::nn::{Adam, Graph, LayerNorm, Linear, Mlp, MultiHeadAttention, ParamStore, Tensor, Var};
use crate::trajdata::TrajectoryWindow;

/// Longitudinal coordinates are divided by this before entering the network.
pub const INPUT_SCALE: f64 = 25.0;
/// Lateral coordinates are divided by this before entering the network.
pub const LATERAL_SCALE: f64 = 2.0;
/// Goal-head outputs are multiplied by this to give offsets in meters.
pub const GOAL_SCALE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GoalNetConfig {
    pub t_obs: usize,
    pub t_pred: usize,
    pub d_model: usize,
    pub heads: usize,
    pub blocks: usize,
    pub ffn: usize,
    /// Weight of the probability loss.
    pub lambda: f64,
    pub huber_delta: f64,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_neighbors: usize,
    pub seed: u64,
}

impl Default for GoalNetConfig {
    fn default() -> Self {
        Self {
            t_obs: 30,
            t_pred: 50,
            d_model: 64,
            heads: 4,
            blocks: 2,
            ffn: 256,
            lambda: 1.0,
            huber_delta: 1.0,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            epochs: 50,
            batch_size: 16,
            max_neighbors: 8,
            seed: 42,
        }
    }
}

impl GoalNetConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.t_obs < 2 {
            problems.push(format!("t_obs must be >= 2 (got {})", self.t_obs));
        }
        if self.t_pred < 1 {
            problems.push(format!("t_pred must be >= 1 (got {})", self.t_pred));
        }
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            problems.push(format!(
                "d_model {} must be divisible by heads {}",
                self.d_model, self.heads
            ));
        }
        if self.ffn == 0 {
            problems.push("ffn must be positive".into());
        }
        if !(self.lambda >= 0.0) {
            problems.push(format!("lambda must be >= 0 (got {})", self.lambda));
        }
        if !(self.huber_delta > 0.0) {
            problems.push(format!("huber_delta must be > 0 (got {})", self.huber_delta));
        }
        if !(self.learning_rate > 0.0) {
            problems.push(format!("learning_rate must be > 0 (got {})", self.learning_rate));
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }
}

/// Network inputs for one normalized window.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalSample {
    pub observed: Vec<Vec2>,
    /// One observed trajectory per neighbor slot; masked slots are zeros.
    pub neighbors: Vec<Vec<Vec2>>,
    pub mask: Vec<bool>,
    /// Ground-truth goal, when known.
    pub goal: Option<Vec2>,
}

impl GoalSample {
    pub fn from_window(window: &TrajectoryWindow, slots: usize) -> Self {
        let (neighbors, mask) = window.padded_neighbors(slots);
        Self {
            observed: window.observed_positions(),
            neighbors,
            mask,
            goal: Some(window.goal()),
        }
    }
}

/// `L` goal hypotheses, or the top `K` of them.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GoalHypothesisSet {
    pub goals: Vec<Vec2>,
    /// Probabilities as predicted over the full mode set.
    pub probabilities: Vec<f64>,
    /// `probabilities` rescaled to sum to one over this subset.
    pub renormalized: Vec<f64>,
    pub source_mode: Vec<usize>,
}

impl GoalHypothesisSet {
    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }
}

/// Embeddings of one sample. `combined` is `L x D_e`.
#[derive(Debug, Clone, Copy)]
pub struct EncoderInput {
    pub mode_embedding: Var,
    pub observation_embedding: Var,
    pub combined: Var,
}

/// Head outputs: logits and probabilities are `1 x L`, goals `L x 2`.
#[derive(Debug, Clone, Copy)]
pub struct HeadOutput {
    pub logits: Var,
    pub probabilities: Var,
    pub goals: Var,
}

#[derive(Debug, Clone)]
struct EncoderBlock {
    attn_norm: LayerNorm,
    attn: MultiHeadAttention,
    ffn_norm: LayerNorm,
    ffn: Mlp,
}

#[derive(Debug, Clone)]
struct DecoderBlock {
    query_norm: LayerNorm,
    key_norm: LayerNorm,
    attn: MultiHeadAttention,
    ffn_norm: LayerNorm,
    ffn: Mlp,
}

/// The goal network and its parameters.
#[derive(Debug, Clone)]
pub struct GoalNet {
    pub config: GoalNetConfig,
    pub store: ParamStore,
    mode_embed: Linear,
    obs_embed: Linear,
    neighbor_embed: Linear,
    encoder: Vec<EncoderBlock>,
    decoder: DecoderBlock,
    prob_head: Linear,
    goal_head: Mlp,
}

fn flatten_scaled(points: &[Vec2]) -> Vec<f64> {
    points
        .iter()
        .flat_map(|p| [p[0] / INPUT_SCALE, p[1] / LATERAL_SCALE])
        .collect()
}

fn residual_ffn(g: &mut Graph, store: &ParamStore, norm: &LayerNorm, ffn: &Mlp, x: Var) -> Result<Var> {
    let n = norm.forward(g, store, x)?;
    let f = ffn.forward(g, store, n)?;
    g.add(x, f)
}

impl GoalNet {
    /// Builds a freshly initialized network. The goal head's last layer
    /// starts at zero, so initial goals sit on the mode endpoints.
    pub fn new(config: GoalNetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let d = config.d_model;
        let mode_embed = Linear::new(&mut store, "embed.modes", 2 * config.t_pred, d, &mut rng)?;
        let obs_embed = Linear::new(&mut store, "embed.observed", 2 * config.t_obs, d, &mut rng)?;
        let neighbor_embed = Linear::new(&mut store, "embed.neighbors", 2 * config.t_obs, d, &mut rng)?;
        let mut encoder = Vec::with_capacity(config.blocks);
        for b in 0..config.blocks {
            let name = format!("encoder.{b}");
            encoder.push(EncoderBlock {
                attn_norm: LayerNorm::new(&mut store, &format!("{name}.attn_norm"), d)?,
                attn: MultiHeadAttention::new(&mut store, &format!("{name}.attn"), d, config.heads, &mut rng)?,
                ffn_norm: LayerNorm::new(&mut store, &format!("{name}.ffn_norm"), d)?,
                ffn: Mlp::new(&mut store, &format!("{name}.ffn"), &[d, config.ffn, d], false, &mut rng)?,
            });
        }
        let decoder = DecoderBlock {
            query_norm: LayerNorm::new(&mut store, "decoder.query_norm", d)?,
            key_norm: LayerNorm::new(&mut store, "decoder.key_norm", d)?,
            attn: MultiHeadAttention::new(&mut store, "decoder.attn", d, config.heads, &mut rng)?,
            ffn_norm: LayerNorm::new(&mut store, "decoder.ffn_norm", d)?,
            ffn: Mlp::new(&mut store, "decoder.ffn", &[d, config.ffn, d], false, &mut rng)?,
        };
        let prob_head = Linear::new(&mut store, "head.probability", d, 1, &mut rng)?;
        let goal_head = Mlp::new(&mut store, "head.goal", &[d, d, 2], true, &mut rng)?;
        Ok(Self {
            config,
            store,
            mode_embed,
            obs_embed,
            neighbor_embed,
            encoder,
            decoder,
            prob_head,
            goal_head,
        })
    }

    fn check_modes(&self, modes: &IntentionModeSet) -> Result<()> {
        if modes.t_pred() != self.config.t_pred {
            return Err(Error::Shape {
                op: "embed_inputs",
                left: [modes.len(), 2 * modes.t_pred()],
                right: [2 * self.config.t_pred, self.config.d_model],
            });
        }
        Ok(())
    }

    /// Mode embedding `E_c`, observation embedding `E_o` and their
    /// broadcast sum `E_e`.
    pub fn embed_inputs(&self, g: &mut Graph, modes: &IntentionModeSet, observed: &[Vec2]) -> Result<EncoderInput> {
        self.check_modes(modes)?;
        if observed.len() != self.config.t_obs {
            return Err(Error::Shape {
                op: "embed_inputs",
                left: [1, 2 * observed.len()],
                right: [2 * self.config.t_obs, self.config.d_model],
            });
        }
        let rows: Vec<Vec<f64>> = modes.centers().iter().map(|c| flatten_scaled(c)).collect();
        let centers = g.input(Tensor::from_rows(&rows)?)?;
        let obs = g.input(Tensor::row(&flatten_scaled(observed)))?;
        let mode_embedding = self.mode_embed.forward(g, &self.store, centers)?;
        let observation_embedding = self.obs_embed.forward(g, &self.store, obs)?;
        let combined = g.add_row(mode_embedding, observation_embedding)?;
        Ok(EncoderInput {
            mode_embedding,
            observation_embedding,
            combined,
        })
    }

    /// Pre-norm self-attention and feed-forward blocks over the mode slots.
    pub fn encode(&self, g: &mut Graph, input: Var) -> Result<Var> {
        let mut h = input;
        for block in &self.encoder {
            let n = block.attn_norm.forward(g, &self.store, h)?;
            let a = block.attn.forward(g, &self.store, n, n, None)?;
            h = g.add(h, a.output)?;
            h = residual_ffn(g, &self.store, &block.ffn_norm, &block.ffn, h)?;
        }
        Ok(h)
    }

    /// Mode-slot queries attend over the embedded neighbors. With no
    /// neighbor present only the feed-forward residual runs.
    pub fn decode_social(&self, g: &mut Graph, memory: Var, neighbors: &[Vec<Vec2>], mask: &[bool]) -> Result<Var> {
        if neighbors.len() != mask.len() {
            return Err(Error::Shape {
                op: "decode_social",
                left: [neighbors.len(), 1],
                right: [mask.len(), 1],
            });
        }
        let dec = &self.decoder;
        let mut h = memory;
        if mask.iter().any(|m| *m) {
            let rows: Vec<Vec<f64>> = neighbors
                .iter()
                .zip(mask)
                .map(|(n, m)| if *m { flatten_scaled(n) } else { vec![0.0; 2 * n.len()] })
                .collect();
            for r in &rows {
                if r.len() != 2 * self.config.t_obs {
                    return Err(Error::Shape {
                        op: "decode_social",
                        left: [neighbors.len(), r.len()],
                        right: [2 * self.config.t_obs, self.config.d_model],
                    });
                }
            }
            let nb = g.input(Tensor::from_rows(&rows)?)?;
            let keys = self.neighbor_embed.forward(g, &self.store, nb)?;
            let q = dec.query_norm.forward(g, &self.store, h)?;
            let k = dec.key_norm.forward(g, &self.store, keys)?;
            let a = dec.attn.forward(g, &self.store, q, k, Some(mask))?;
            h = g.add(h, a.output)?;
        }
        residual_ffn(g, &self.store, &dec.ffn_norm, &dec.ffn, h)
    }

    /// Probability head on the encoder output, goal head on the decoder
    /// output. Goals are offsets added to the mode endpoints.
    pub fn predict_heads(
        &self,
        g: &mut Graph,
        modes: &IntentionModeSet,
        encoded: Var,
        decoded: Var,
    ) -> Result<HeadOutput> {
        let l = modes.len();
        let raw = self.prob_head.forward(g, &self.store, encoded)?;
        let logits = g.reshape(raw, 1, l)?;
        let probabilities = g.softmax_rows(logits, None)?;
        let offsets = self.goal_head.forward(g, &self.store, decoded)?;
        let offsets = g.scale(offsets, GOAL_SCALE)?;
        let ends: Vec<[f64; 2]> = modes.endpoints();
        let anchors = g.input(Tensor::from_rows(&ends)?)?;
        let goals = g.add(anchors, offsets)?;
        Ok(HeadOutput {
            logits,
            probabilities,
            goals,
        })
    }

    /// Full forward pass of one sample on `g`.
    pub fn forward(&self, g: &mut Graph, modes: &IntentionModeSet, sample: &GoalSample) -> Result<HeadOutput> {
        let input = self.embed_inputs(g, modes, &sample.observed)?;
        let encoded = self.encode(g, input.combined)?;
        let decoded = self.decode_social(g, encoded, &sample.neighbors, &sample.mask)?;
        self.predict_heads(g, modes, encoded, decoded)
    }

    /// All `L` hypotheses for one sample.
    pub fn predict(&self, modes: &IntentionModeSet, sample: &GoalSample) -> Result<GoalHypothesisSet> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, modes, sample)?;
        let probabilities = g.value(out.probabilities).data().to_vec();
        let gv = g.value(out.goals);
        let goals = (0..modes.len()).map(|i| [gv.at(i, 0), gv.at(i, 1)]).collect();
        Ok(GoalHypothesisSet {
            goals,
            renormalized: probabilities.clone(),
            probabilities,
            source_mode: (0..modes.len()).collect(),
        })
    }

    /// Loss of one sample; returns `(total, goal_term, probability_term)`.
    pub fn loss(&self, g: &mut Graph, modes: &IntentionModeSet, sample: &GoalSample) -> Result<(Var, Var, Var)> {
        let goal = sample
            .goal
            .ok_or_else(|| Error::InvalidArgument("training sample has no ground-truth goal".into()))?;
        let (target, soft) = training_targets(goal, modes);
        let out = self.forward(g, modes, sample)?;
        let chosen = g.slice_rows(out.goals, target, 1)?;
        let goal_term = g.huber(chosen, &Tensor::row(&goal), self.config.huber_delta)?;
        let prob_term = g.soft_cross_entropy(out.logits, &Tensor::row(&soft))?;
        let weighted = g.scale(prob_term, self.config.lambda)?;
        let total = g.add(goal_term, weighted)?;
        Ok((total, goal_term, prob_term))
    }
}

/// Greedy target index (nearest mode endpoint) and soft probability targets.
pub fn training_targets(goal: Vec2, modes: &IntentionModeSet) -> (usize, Vec<f64>) {
    let q = ModeQuery::Goal(goal);
    (nearest_mode(q, modes), soft_probabilities(q, modes))
}

/// The `k` most probable hypotheses, sorted by descending probability with
/// ties broken toward the lower mode index.
pub fn top_k(set: &GoalHypothesisSet, k: usize) -> Result<GoalHypothesisSet> {
    if k == 0 || k > set.len() {
        return Err(Error::InvalidArgument(format!(
            "K must be in 1..={} (got {k})",
            set.len()
        )));
    }
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| set.probabilities[b].total_cmp(&set.probabilities[a]).then(a.cmp(&b)));
    order.truncate(k);
    let probabilities: Vec<f64> = order.iter().map(|&i| set.probabilities[i]).collect();
    let mass: f64 = probabilities.iter().sum();
    Ok(GoalHypothesisSet {
        goals: order.iter().map(|&i| set.goals[i]).collect(),
        renormalized: probabilities.iter().map(|p| p / mass).collect(),
        probabilities,
        source_mode: order.iter().map(|&i| set.source_mode[i]).collect(),
    })
}

/// Runs the network and keeps the top `k` goals.
pub fn sample_goals(
    net: &GoalNet,
    modes: &IntentionModeSet,
    sample: &GoalSample,
    k: usize,
) -> Result<GoalHypothesisSet> {
    top_k(&net.predict(modes, sample)?, k)
}

/// Per-epoch mean losses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossCurve {
    pub total: Vec<f64>,
    pub goal: Vec<f64>,
    pub probability: Vec<f64>,
}

/// Training outcome. On divergence the parameters of the last completed
/// epoch are restored and `diverged_at` names the failing epoch.
#[derive(Debug, Clone)]
pub struct GoalTraining {
    pub curve: LossCurve,
    pub diverged_at: Option<usize>,
}

/// Minimizes Huber goal loss plus `lambda` times soft cross-entropy with Adam.
pub fn train_goalnet(net: &mut GoalNet, modes: &IntentionModeSet, samples: &[GoalSample]) -> Result<GoalTraining> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no training samples".into()));
    }
    net.check_modes(modes)?;
    let cfg = net.config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_0001);
    let mut adam = Adam::new(cfg.learning_rate).with_clip(cfg.clip_norm);
    let mut curve = LossCurve::default();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..cfg.epochs {
        let snapshot = net.store.clone();
        order.shuffle(&mut rng);
        let mut sums = [0.0; 3];
        let result: Result<()> = (|| {
            for batch in order.chunks(cfg.batch_size) {
                net.store.zero_grads();
                for &i in batch {
                    let mut g = Graph::new();
                    let (total, goal, prob) = net.loss(&mut g, modes, &samples[i])?;
                    sums[0] += g.scalar(total);
                    sums[1] += g.scalar(goal);
                    sums[2] += g.scalar(prob);
                    let grads = g.backward(total)?;
                    g.accumulate_param_grads(&grads, &mut net.store);
                }
                net.store.scale_grads(1.0 / batch.len() as f64);
                adam.step(&mut net.store, |_| true)?;
            }
            Ok(())
        })();
        let n = samples.len() as f64;
        let finite = sums.iter().all(|s| s.is_finite());
        match result {
            Ok(()) if finite => {
                curve.total.push(sums[0] / n);
                curve.goal.push(sums[1] / n);
                curve.probability.push(sums[2] / n);
            }
            Ok(()) | Err(Error::NonFinite { .. }) | Err(Error::NonFiniteGradient { .. }) => {
                let step = snapshot.step;
                net.store = snapshot;
                net.store.step = step;
                return Ok(GoalTraining {
                    curve,
                    diverged_at: Some(epoch),
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(GoalTraining {
        curve,
        diverged_at: None,
    })
}

//! Displacement metrics, extrapolation baselines, best-of-K scoring and the
//! ablation harness.

mod ablation;

pub use ablation::{
    evaluate, evaluate_baseline, evaluate_with, nearest_predicted_goal, run_ablation, AblationConfig, AblationReport,
    AblationRow, Evaluation, Predictor, Variant, WindowPrediction,
};

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geom::{self, Vec2};

fn check_lengths(truth: &[Vec2], pred: &[Vec2], op: &'static str) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::Shape {
            op,
            left: [truth.len(), 2],
            right: [pred.len(), 2],
        });
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument(format!("{op} needs at least one point")));
    }
    Ok(())
}

/// Mean Euclidean distance per step.
pub fn ade(truth: &[Vec2], pred: &[Vec2]) -> Result<f64> {
    check_lengths(truth, pred, "ade")?;
    Ok(truth.iter().zip(pred).map(|(a, b)| geom::dist(*a, *b)).sum::<f64>() / truth.len() as f64)
}

/// Distance between the final points.
pub fn fde(truth: &[Vec2], pred: &[Vec2]) -> Result<f64> {
    check_lengths(truth, pred, "fde")?;
    Ok(geom::dist(truth[truth.len() - 1], pred[pred.len() - 1]))
}

/// Root of the mean squared distance per step.
pub fn rmse(truth: &[Vec2], pred: &[Vec2]) -> Result<f64> {
    check_lengths(truth, pred, "rmse")?;
    Ok(libm::sqrt(
        truth.iter().zip(pred).map(|(a, b)| geom::dist_sq(*a, *b)).sum::<f64>() / truth.len() as f64,
    ))
}

/// RMSE over the first 1 s, 2 s, ... of the horizon.
pub fn horizon_rmse(truth: &[Vec2], pred: &[Vec2], dt: f64) -> Result<Vec<f64>> {
    check_lengths(truth, pred, "horizon_rmse")?;
    let per_second = libm::round(1.0 / dt) as usize;
    if per_second == 0 {
        return Err(Error::InvalidArgument(format!("dt {dt} exceeds one second")));
    }
    (1..=truth.len() / per_second)
        .map(|s| rmse(&truth[..s * per_second], &pred[..s * per_second]))
        .collect()
}

/// Constant-velocity extrapolation from the last two observed positions.
pub fn baseline_cv(observed: &[Vec2], t_pred: usize) -> Result<Vec<Vec2>> {
    if observed.len() < 2 {
        return Err(Error::InvalidArgument(
            "constant-velocity baseline needs 2 observed frames".into(),
        ));
    }
    let n = observed.len();
    let step = geom::sub(observed[n - 1], observed[n - 2]);
    Ok((1..=t_pred)
        .map(|k| geom::add(observed[n - 1], geom::scale(step, k as f64)))
        .collect())
}

/// Constant-acceleration extrapolation through the last three observed
/// positions.
pub fn baseline_ca(observed: &[Vec2], t_pred: usize) -> Result<Vec<Vec2>> {
    if observed.len() < 3 {
        return Err(Error::InvalidArgument(
            "constant-acceleration baseline needs 3 observed frames".into(),
        ));
    }
    let n = observed.len();
    let (p0, p1, p2) = (observed[n - 3], observed[n - 2], observed[n - 1]);
    let step = geom::sub(p2, p1);
    let curve = geom::add(geom::sub(p2, geom::scale(p1, 2.0)), p0);
    Ok((1..=t_pred)
        .map(|k| {
            let k = k as f64;
            geom::add(
                geom::add(p2, geom::scale(step, k)),
                geom::scale(curve, k * (k + 1.0) / 2.0),
            )
        })
        .collect())
}

/// Metrics of one window for one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Scores {
    pub ade: f64,
    pub fde: f64,
    pub rmse: f64,
}

impl Scores {
    pub fn of(truth: &[Vec2], pred: &[Vec2]) -> Result<Self> {
        Ok(Self {
            ade: ade(truth, pred)?,
            fde: fde(truth, pred)?,
            rmse: rmse(truth, pred)?,
        })
    }
}

/// Best-of-K and probability-weighted scores of a hypothesis set.
#[derive(Debug, Clone, PartialEq)]
pub struct BestOfK {
    /// Index of the minimum-ADE hypothesis (lowest index on ties).
    pub best: usize,
    pub best_scores: Scores,
    pub weighted: Scores,
    pub horizon: Vec<f64>,
}

/// Scores hypotheses against `truth`. `weights` are normalized internally.
pub fn best_of_k(truth: &[Vec2], hypotheses: &[Vec<Vec2>], weights: &[f64], dt: f64) -> Result<BestOfK> {
    if hypotheses.is_empty() || hypotheses.len() != weights.len() {
        return Err(Error::Shape {
            op: "best_of_k",
            left: [hypotheses.len(), 1],
            right: [weights.len(), 1],
        });
    }
    let scores = hypotheses
        .iter()
        .map(|h| Scores::of(truth, h))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.ade < scores[best].ade {
            best = i;
        }
    }
    let mass: f64 = weights.iter().sum();
    let mut weighted = Scores::default();
    for (s, w) in scores.iter().zip(weights) {
        let w = w / mass;
        weighted.ade += w * s.ade;
        weighted.fde += w * s.fde;
        weighted.rmse += w * s.rmse;
    }
    Ok(BestOfK {
        best,
        best_scores: scores[best],
        weighted,
        horizon: horizon_rmse(truth, &hypotheses[best], dt)?,
    })
}

/// Window-averaged metrics.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricReport {
    pub ade: f64,
    pub fde: f64,
    pub rmse: f64,
    /// RMSE over the first 1 s, 2 s, ... of the horizon.
    pub horizon: Vec<f64>,
    pub weighted_ade: f64,
    pub weighted_fde: f64,
    pub weighted_rmse: f64,
    pub k: usize,
    pub samples: usize,
}

/// Accumulates per-window results in insertion order.
#[derive(Debug, Clone, Default)]
pub struct MetricAccumulator {
    sums: [f64; 6],
    horizon: Vec<f64>,
    count: usize,
    k: usize,
}

impl MetricAccumulator {
    pub fn new(k: usize) -> Self {
        Self { k, ..Self::default() }
    }

    pub fn push(&mut self, r: &BestOfK) {
        let b = r.best_scores;
        let w = r.weighted;
        for (s, v) in self.sums.iter_mut().zip([b.ade, b.fde, b.rmse, w.ade, w.fde, w.rmse]) {
            *s += v;
        }
        if self.horizon.len() < r.horizon.len() {
            self.horizon.resize(r.horizon.len(), 0.0);
        }
        for (s, v) in self.horizon.iter_mut().zip(&r.horizon) {
            *s += v;
        }
        self.count += 1;
    }

    pub fn report(&self) -> MetricReport {
        let n = self.count.max(1) as f64;
        MetricReport {
            ade: self.sums[0] / n,
            fde: self.sums[1] / n,
            rmse: self.sums[2] / n,
            horizon: self.horizon.iter().map(|h| h / n).collect(),
            weighted_ade: self.sums[3] / n,
            weighted_fde: self.sums[4] / n,
            weighted_rmse: self.sums[5] / n,
            k: self.k,
            samples: self.count,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_values() {
        let truth = [[0.0, 0.0], [3.0, 4.0]];
        let pred = [[0.0, 0.0], [0.0, 0.0]];
        assert_eq!(ade(&truth, &pred).unwrap(), 2.5);
        assert_eq!(fde(&truth, &pred).unwrap(), 5.0);
        assert!((rmse(&truth, &pred).unwrap() - 3.5355339059327378).abs() < 1e-15);
        assert_eq!(ade(&truth, &truth).unwrap(), 0.0);
        assert!(ade(&truth, &pred[..1]).is_err());
        assert!(fde(&[], &[]).is_err());
    }

    #[test]
    fn constant_offset_gives_equal_metrics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth: Vec<Vec2> = (0..37)
            .map(|_| [rng.gen_range(-50.0..50.0), rng.gen_range(-5.0..5.0)])
            .collect();
        let pred: Vec<Vec2> = truth.iter().map(|p| [p[0], p[1] + 1.0]).collect();
        for m in [ade(&truth, &pred), fde(&truth, &pred), rmse(&truth, &pred)] {
            assert!((m.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_are_isometry_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth: Vec<Vec2> = (0..20)
            .map(|_| [rng.gen_range(-50.0..50.0), rng.gen_range(-5.0..5.0)])
            .collect();
        let pred: Vec<Vec2> = (0..20)
            .map(|_| [rng.gen_range(-50.0..50.0), rng.gen_range(-5.0..5.0)])
            .collect();
        let (c, s) = (libm::cos(0.7), libm::sin(0.7));
        let mv = |p: &Vec2| [c * p[0] - s * p[1] + 3.0, s * p[0] + c * p[1] - 8.0];
        let t2: Vec<Vec2> = truth.iter().map(mv).collect();
        let p2: Vec<Vec2> = pred.iter().map(mv).collect();
        assert!((ade(&truth, &pred).unwrap() - ade(&t2, &p2).unwrap()).abs() < 1e-9);
        assert!((rmse(&truth, &pred).unwrap() - rmse(&t2, &p2).unwrap()).abs() < 1e-9);
        assert!((fde(&truth, &pred).unwrap() - fde(&t2, &p2).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn baselines_are_exact_on_their_model_class() {
        let straight: Vec<Vec2> = (0..40).map(|i| [2.5 * i as f64, 0.1 * i as f64]).collect();
        let cv = baseline_cv(&straight[..30], 10).unwrap();
        assert!(ade(&straight[30..], &cv).unwrap() < 1e-12);
        let parked = vec![[4.0, 1.0]; 5];
        assert_eq!(baseline_cv(&parked, 3).unwrap(), vec![[4.0, 1.0]; 3]);
        let accel: Vec<Vec2> = (0..40)
            .map(|i| [0.5 * 0.3 * (i * i) as f64, 0.02 * (i * i) as f64])
            .collect();
        let ca = baseline_ca(&accel[..30], 10).unwrap();
        assert!(ade(&accel[30..], &ca).unwrap() < 1e-9);
        assert!(ade(&accel[30..], &baseline_cv(&accel[..30], 10).unwrap()).unwrap() > 0.1);
        assert!(baseline_cv(&straight[..1], 5).is_err());
        assert!(baseline_ca(&straight[..2], 5).is_err());
    }

    #[test]
    fn best_of_k_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth: Vec<Vec2> = (1..=20).map(|i| [2.5 * i as f64, 0.0]).collect();
        let hyps: Vec<Vec<Vec2>> = (0..6)
            .map(|_| {
                let dy = rng.gen_range(-4.0..4.0);
                truth
                    .iter()
                    .map(|p| [p[0] * rng.gen_range(0.95..1.05), p[1] + dy])
                    .collect()
            })
            .collect();
        let w = vec![1.0; 6];
        let single = best_of_k(&truth, &hyps[..1], &w[..1], 0.1).unwrap();
        assert_eq!(single.best_scores, Scores::of(&truth, &hyps[0]).unwrap());
        let mut prev = f64::INFINITY;
        for k in 1..=6 {
            let r = best_of_k(&truth, &hyps[..k], &w[..k], 0.1).unwrap();
            assert!(r.best_scores.ade <= prev);
            prev = r.best_scores.ade;
        }
        let mut dup = hyps.clone();
        dup.push(hyps[2].clone());
        let a = best_of_k(&truth, &hyps, &w, 0.1).unwrap();
        let b = best_of_k(&truth, &dup, &[1.0; 7], 0.1).unwrap();
        assert_eq!(a.best_scores, b.best_scores);
        assert_eq!(a.horizon.len(), 2);
    }
}

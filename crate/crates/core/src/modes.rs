//! Intention modes: k-means centers of normalized future trajectories.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{self, Vec2};

pub const MAX_ITERATIONS: usize = 200;
/// Seeding restarts; the lowest-inertia run is kept.
pub const RESTARTS: usize = 10;

/// What a query is compared against when picking the nearest mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ComparisonBasis {
    /// Goal point against each center's final point.
    #[default]
    Endpoint,
    /// Whole future against whole center.
    Full,
}

impl ComparisonBasis {
    pub fn as_str(self) -> &'static str {
        match self {
            ComparisonBasis::Endpoint => "endpoint",
            ComparisonBasis::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "endpoint" => Some(ComparisonBasis::Endpoint),
            "full" => Some(ComparisonBasis::Full),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeQuery<'a> {
    Goal(Vec2),
    Trajectory(&'a [Vec2]),
}

impl<'a> ModeQuery<'a> {
    /// Builds the query for `future` under `basis`.
    pub fn for_future(future: &'a [Vec2], basis: ComparisonBasis) -> Self {
        match basis {
            ComparisonBasis::Endpoint => ModeQuery::Goal(*future.last().expect("non-empty future")),
            ComparisonBasis::Full => ModeQuery::Trajectory(future),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntentionModeSet {
    centers: Vec<Vec<Vec2>>,
    populations: Vec<usize>,
    pub normalization_tag: String,
}

impl IntentionModeSet {
    /// Validates and wraps `centers`. Populations default to zero when the
    /// set is loaded rather than fitted.
    pub fn new(centers: Vec<Vec<Vec2>>, populations: Vec<usize>, normalization_tag: String) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidArgument("mode set needs at least one center".into()));
        }
        let t_pred = centers[0].len();
        if t_pred == 0 || centers.iter().any(|c| c.len() != t_pred) {
            return Err(Error::InvalidArgument(
                "all centers need the same non-zero length".into(),
            ));
        }
        if populations.len() != centers.len() {
            return Err(Error::InvalidArgument("one population count per center".into()));
        }
        for i in 0..centers.len() {
            for j in i + 1..centers.len() {
                if squared_distance(&centers[i], &centers[j]) == 0.0 {
                    return Err(Error::InvalidArgument(format!("centers {i} and {j} coincide")));
                }
            }
        }
        Ok(Self {
            centers,
            populations,
            normalization_tag,
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn t_pred(&self) -> usize {
        self.centers[0].len()
    }

    pub fn centers(&self) -> &[Vec<Vec2>] {
        &self.centers
    }

    pub fn center(&self, index: usize) -> &[Vec2] {
        &self.centers[index]
    }

    pub fn endpoint(&self, index: usize) -> Vec2 {
        *self.centers[index].last().expect("non-empty center")
    }

    pub fn endpoints(&self) -> Vec<Vec2> {
        (0..self.len()).map(|i| self.endpoint(i)).collect()
    }

    pub fn populations(&self) -> &[usize] {
        &self.populations
    }

    /// Squared distance between the query and each center.
    pub fn squared_distances(&self, query: ModeQuery<'_>) -> Vec<f64> {
        match query {
            ModeQuery::Goal(g) => (0..self.len()).map(|i| geom::dist_sq(g, self.endpoint(i))).collect(),
            ModeQuery::Trajectory(t) => {
                assert_eq!(t.len(), self.t_pred(), "query length must match t_pred");
                self.centers.iter().map(|c| squared_distance(t, c)).collect()
            }
        }
    }
}

/// Index of the closest center; ties go to the lowest index.
pub fn nearest_mode(query: ModeQuery<'_>, modes: &IntentionModeSet) -> usize {
    argmin(&modes.squared_distances(query))
}

/// Softmax of the negative squared distances (temperature 1, units m^2).
pub fn soft_probabilities(query: ModeQuery<'_>, modes: &IntentionModeSet) -> Vec<f64> {
    let neg: Vec<f64> = modes.squared_distances(query).into_iter().map(|d| -d).collect();
    softmax(&neg)
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| libm::exp(z - max)).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

fn squared_distance(a: &[Vec2], b: &[Vec2]) -> f64 {
    a.iter().zip(b).map(|(p, q)| geom::dist_sq(*p, *q)).sum()
}

/// Evidence that the Lloyd iterations behaved.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansCertificate {
    pub iterations: usize,
    pub converged: bool,
    /// Inertia after every assignment step.
    pub inertia_history: Vec<f64>,
    pub reseeds: usize,
}

impl KMeansCertificate {
    pub fn final_inertia(&self) -> f64 {
        *self.inertia_history.last().unwrap_or(&0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeFit {
    pub modes: IntentionModeSet,
    pub certificate: KMeansCertificate,
    /// Cluster index of every input future, in the sorted center order.
    pub assignment: Vec<usize>,
}

/// k-means over flattened futures with farthest-point-style seeding.
///
/// Each of [`RESTARTS`] runs seeds with squared-distance weighting drawn
/// from the `seed` stream, so far-away samples are favored as new seeds.
/// The run with the lowest final inertia wins. A cluster that empties is re-seeded
/// at the sample farthest from its current center. Centers are returned in
/// decreasing population order.
pub fn fit_modes(futures: &[Vec<Vec2>], l: usize, seed: u64) -> Result<ModeFit> {
    if l == 0 {
        return Err(Error::InvalidArgument("need at least one mode".into()));
    }
    if futures.len() < l {
        return Err(Error::InvalidArgument(format!(
            "{} futures cannot support {} modes",
            futures.len(),
            l
        )));
    }
    let t_pred = futures[0].len();
    if t_pred == 0 || futures.iter().any(|f| f.len() != t_pred) {
        return Err(Error::InvalidArgument("futures must share a non-zero length".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<Vec<Vec2>>, Vec<usize>, KMeansCertificate)> = None;
    for _ in 0..RESTARTS {
        let run = lloyd(futures, d2_seeds(futures, l, &mut rng)?, l);
        if best
            .as_ref()
            .is_none_or(|b| run.2.final_inertia() < b.2.final_inertia())
        {
            best = Some(run);
        }
    }
    let (centers, assignment, certificate) = best.expect("at least one restart");

    let mut populations = vec![0usize; l];
    for &a in &assignment {
        populations[a] += 1;
    }
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| populations[b].cmp(&populations[a]).then(a.cmp(&b)));
    let mut rank = vec![0; l];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r;
    }
    let sorted_centers = order.iter().map(|&c| centers[c].clone()).collect();
    let sorted_pops = order.iter().map(|&c| populations[c]).collect();
    let assignment = assignment.into_iter().map(|a| rank[a]).collect();
    Ok(ModeFit {
        modes: IntentionModeSet::new(sorted_centers, sorted_pops, String::new())?,
        certificate,
        assignment,
    })
}

/// k-means++ style seeding: each new seed is drawn with probability
/// proportional to its squared distance from the nearest chosen seed.
fn d2_seeds(futures: &[Vec<Vec2>], l: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<Vec2>>> {
    let mut centers: Vec<Vec<Vec2>> = vec![futures[rng.gen_range(0..futures.len())].clone()];
    let mut nearest: Vec<f64> = futures.iter().map(|f| squared_distance(f, &centers[0])).collect();
    while centers.len() < l {
        let total: f64 = nearest.iter().sum();
        if total == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "only {} distinct futures for {} modes",
                centers.len(),
                l
            )));
        }
        let mut target = rng.gen_range(0.0..total);
        let mut pick = argmax(&nearest);
        for (i, d) in nearest.iter().enumerate() {
            if *d > 0.0 && target < *d {
                pick = i;
                break;
            }
            target -= d;
        }
        centers.push(futures[pick].clone());
        let c = centers.last().unwrap();
        for (d, f) in nearest.iter_mut().zip(futures) {
            *d = d.min(squared_distance(f, c));
        }
    }
    Ok(centers)
}

fn lloyd(
    futures: &[Vec<Vec2>],
    mut centers: Vec<Vec<Vec2>>,
    l: usize,
) -> (Vec<Vec<Vec2>>, Vec<usize>, KMeansCertificate) {
    let mut certificate = KMeansCertificate {
        iterations: 0,
        converged: false,
        inertia_history: Vec::new(),
        reseeds: 0,
    };
    let mut previous: Option<Vec<usize>> = None;
    let mut assignment = Vec::new();
    for it in 0..MAX_ITERATIONS {
        let (assign, dists) = assign(futures, &centers);
        certificate.inertia_history.push(dists.iter().sum());
        certificate.iterations = it + 1;
        if previous.as_ref() == Some(&assign) {
            certificate.converged = true;
            assignment = assign;
            break;
        }
        centers = update(futures, &assign, &dists, l, &mut certificate.reseeds);
        previous = Some(assign);
    }
    if !certificate.converged {
        // centers moved after the last assignment
        let (assign, dists) = assign(futures, &centers);
        certificate.inertia_history.push(dists.iter().sum());
        assignment = assign;
    }
    (centers, assignment, certificate)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn assign(futures: &[Vec<Vec2>], centers: &[Vec<Vec2>]) -> (Vec<usize>, Vec<f64>) {
    futures
        .iter()
        .map(|f| {
            let d: Vec<f64> = centers.iter().map(|c| squared_distance(f, c)).collect();
            let i = argmin(&d);
            (i, d[i])
        })
        .unzip()
}

fn update(futures: &[Vec<Vec2>], assign: &[usize], dists: &[f64], l: usize, reseeds: &mut usize) -> Vec<Vec<Vec2>> {
    let t_pred = futures[0].len();
    let mut sums = vec![vec![[0.0, 0.0]; t_pred]; l];
    let mut counts = vec![0usize; l];
    for (f, &a) in futures.iter().zip(assign) {
        counts[a] += 1;
        for (s, p) in sums[a].iter_mut().zip(f) {
            *s = geom::add(*s, *p);
        }
    }
    let mut spare: Vec<f64> = dists.to_vec();
    for c in 0..l {
        if counts[c] == 0 {
            let far = argmax(&spare);
            sums[c] = futures[far].clone();
            counts[c] = 1;
            spare[far] = f64::NEG_INFINITY;
            *reseeds += 1;
        } else {
            let inv = 1.0 / counts[c] as f64;
            sums[c].iter_mut().for_each(|p| *p = geom::scale(*p, inv));
        }
    }
    sums
}

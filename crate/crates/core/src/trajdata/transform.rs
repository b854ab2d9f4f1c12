use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LaneGeometry, TrajectoryWindow, VehicleState};
use crate::geom::{self, Vec2};

/// Translation followed by an optional rotation by pi about the origin.
///
/// Forward map: `p' = R (p - translation)`, `v' = R v`, with `R = -I` when
/// `flipped`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RigidTransform {
    pub translation: Vec2,
    pub flipped: bool,
}

impl RigidTransform {
    pub const IDENTITY: Self = Self {
        translation: [0.0, 0.0],
        flipped: false,
    };

    pub fn rotation_angle(&self) -> f64 {
        if self.flipped {
            core::f64::consts::PI
        } else {
            0.0
        }
    }

    fn sign(&self) -> f64 {
        if self.flipped {
            -1.0
        } else {
            1.0
        }
    }

    pub fn apply_point(&self, p: Vec2) -> Vec2 {
        geom::scale(geom::sub(p, self.translation), self.sign())
    }

    pub fn apply_vector(&self, v: Vec2) -> Vec2 {
        geom::scale(v, self.sign())
    }

    pub fn invert_point(&self, p: Vec2) -> Vec2 {
        geom::add(geom::scale(p, self.sign()), self.translation)
    }

    pub fn invert_vector(&self, v: Vec2) -> Vec2 {
        geom::scale(v, self.sign())
    }

    pub fn apply_state(&self, s: &VehicleState) -> VehicleState {
        VehicleState::new(self.apply_point(s.position), self.apply_vector(s.velocity))
    }

    pub fn invert_state(&self, s: &VehicleState) -> VehicleState {
        VehicleState::new(self.invert_point(s.position), self.invert_vector(s.velocity))
    }

    pub fn apply_lanes(&self, lanes: &LaneGeometry) -> LaneGeometry {
        lanes.transformed(self.translation[1], self.flipped)
    }

    pub fn apply_window(&self, w: &TrajectoryWindow) -> TrajectoryWindow {
        self.map_window(w, |s| self.apply_state(s))
    }

    pub fn invert_window(&self, w: &TrajectoryWindow) -> TrajectoryWindow {
        self.map_window(w, |s| self.invert_state(s))
    }

    fn map_window(&self, w: &TrajectoryWindow, f: impl Fn(&VehicleState) -> VehicleState) -> TrajectoryWindow {
        let mut out = w.clone();
        out.observed
            .iter_mut()
            .chain(out.future.iter_mut())
            .for_each(|s| *s = f(s));
        for n in &mut out.neighbors {
            n.observed.iter_mut().for_each(|s| *s = f(s));
        }
        out
    }
}

/// Moves the first future point to the origin and turns westbound samples
/// eastbound.
pub fn normalize(window: &TrajectoryWindow) -> (TrajectoryWindow, RigidTransform) {
    let translation = window.future[0].position;
    let mean_vx = window.observed.iter().map(|s| s.velocity[0]).sum::<f64>() / window.observed.len() as f64;
    let transform = RigidTransform {
        translation,
        flipped: mean_vx < 0.0,
    };
    (transform.apply_window(window), transform)
}

/// A normalized window bundled with its transform and the lane lines
/// expressed in the same frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub window: TrajectoryWindow,
    pub transform: RigidTransform,
    pub lanes: LaneGeometry,
}

pub fn prepare(window: &TrajectoryWindow, lanes: &LaneGeometry) -> PreparedSample {
    let (window, transform) = normalize(window);
    let lanes = transform.apply_lanes(lanes);
    PreparedSample {
        window,
        transform,
        lanes,
    }
}

/// Deterministic shuffled train/test split of `0..n`. Both halves are
/// returned in ascending order.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = libm::round(n as f64 * test_fraction.clamp(0.0, 1.0)) as usize;
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

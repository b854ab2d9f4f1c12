//! Goal-based neural social force: a learned relaxation time pulls each
//! vehicle toward its goal, learned interaction strengths scale repulsive
//! potentials from neighbors and lane lines, and explicit Euler steps roll
//! the state forward.

mod forces;
mod nets;
mod rollout;
mod train;

pub use forces::{
    away_from_lane, desired_velocity, goal_force, line_force, line_potential, numeric_repulsion, repulsion_force,
    total_potential, vehicle_force, vehicle_potential, ClampEvent, DesiredVelocity, NeighborPoint, Repulsion, EPS_LINE,
    EPS_POS,
};
pub use nets::{ForceNets, KValues, HISTORY, TAU_MIN};
pub use rollout::{rollout, ForceBreakdown, KMode, RolloutOptions, RolloutResult, Scene, TauMode};
pub use train::{rollout_loss, train_nsf, train_phase, NsfSample, NsfTraining, Phase};

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NsfConfig {
    /// Length scale of the vehicle potential, meters.
    pub r_col: f64,
    /// Upper bound of every interaction strength.
    pub a: f64,
    pub eps_line: f64,
    pub tau_hidden: usize,
    pub k_hidden: usize,
    /// Initial bias of the strength networks' output layer.
    pub k_bias_init: f64,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
    pub batch_size: usize,
    /// Train the relaxation network together with the strength networks in
    /// phase two instead of freezing it.
    pub joint_phase2: bool,
    pub seed: u64,
}

impl Default for NsfConfig {
    fn default() -> Self {
        Self {
            r_col: 5.0,
            a: 5.0,
            eps_line: EPS_LINE,
            tau_hidden: 64,
            k_hidden: 32,
            k_bias_init: -3.0,
            learning_rate: 1e-3,
            clip_norm: 1.0,
            phase1_epochs: 20,
            phase2_epochs: 20,
            batch_size: 16,
            joint_phase2: false,
            seed: 42,
        }
    }
}

impl NsfConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.r_col > 0.0) {
            problems.push(format!("r_col must be > 0 (got {})", self.r_col));
        }
        if !(self.a > 0.0) {
            problems.push(format!("a must be > 0 (got {})", self.a));
        }
        if !(self.eps_line > 0.0) {
            problems.push(format!("eps_line must be > 0 (got {})", self.eps_line));
        }
        if self.tau_hidden == 0 || self.k_hidden == 0 {
            problems.push("hidden sizes must be positive".into());
        }
        if !self.k_bias_init.is_finite() {
            problems.push("k_bias_init must be finite".into());
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

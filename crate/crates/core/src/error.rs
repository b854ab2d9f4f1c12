use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: [usize; 2],
        right: [usize; 2],
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("non-finite gradient for parameter `{name}`")]
    NonFiniteGradient { name: String },
    #[error("attention query {query} has every key masked")]
    DegenerateAttention { query: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("generation infeasible: {0}")]
    Infeasible(String),
    #[error("non-finite rollout state at step {step}; last breakdown: {last}")]
    RolloutDiverged { step: usize, last: String },
    #[error("training diverged in {phase} at epoch {epoch}; last good parameters restored")]
    Diverged { phase: &'static str, epoch: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

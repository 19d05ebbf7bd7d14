//! Desk-scale intrinsic-reward policy optimization with a geometric
//! diagnostic pipeline for its training dynamics.
//!
//! The crate has two halves that meet at a JSONL token-entropy trace format:
//!
//! * A toy lab ([`toy_lab`]) trains a tabular softmax policy with
//!   group-relative advantages ([`grpo`]) under five intrinsic rewards
//!   ([`rewards`]) built from per-step uncertainty statistics ([`dist`]),
//!   logging token-entropy traces at fixed eval checkpoints.
//! * A diagnostic chain ingests such traces — from the toy lab or from any
//!   external trainer that emits the same schema — into per-token entropy
//!   trajectories ([`trace`]), clusters them with Soft-DTW k-means
//!   ([`cluster`]), projects per-checkpoint cluster means into a 3D phase
//!   space, and scores the convex-hull exploration volume ([`phase`]).
//!
//! Everything is deterministic for a fixed seed: randomness flows from a
//! single top-level seed through the splitting rule in [`rng`], and all
//! iteration orders are over sorted structures.

pub mod cluster;
pub mod dist;
pub mod grpo;
pub mod phase;
pub mod rewards;
pub mod rng;
pub mod toy_lab;
pub mod trace;

pub use cluster::{ClusterModel, SemanticLabel, SoftDtwParams};
pub use dist::{ProbVector, StepStats};
pub use phase::{Diagnosis, HullReport, PhasePoint};
pub use rewards::{RewardKind, StepDistSequence};
pub use trace::{EntropyTrajectory, TraceRecord};

/// Errors shared across the pipeline stages.
///
/// Invalid-input conditions (bad probabilities, shape mismatches, parameter
/// range violations) are distinguishable from not-found conditions (no
/// collapse point, no trajectories surviving the length filter) so callers
/// can map them to different exit paths.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },

    #[error("temperature must be a positive finite number, got {0}")]
    InvalidTemperature(f64),

    #[error("negative probability at index {index}: {value}")]
    NegativeProbability { index: usize, value: f64 },

    #[error("probabilities sum to {sum}, expected 1 within {tolerance}")]
    NotNormalized { sum: f64, tolerance: f64 },

    #[error("inconsistent step statistics: -ln(collision {collision}) exceeds shannon {shannon}")]
    InconsistentStats { shannon: f64, collision: f64 },

    #[error("t_max {t_max} is smaller than the sequence length {len}")]
    TMaxTooSmall { t_max: usize, len: usize },

    #[error("unknown reward kind `{0}` (expected one of: ent, avgent, lp, ch2, cp)")]
    UnknownRewardKind(String),

    #[error("group needs at least 2 rollouts, got {0}")]
    GroupTooSmall(usize),

    #[error("log-probability must be finite and <= 0, got {0}")]
    InvalidLogProb(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("context index {index} out of range for {count} contexts")]
    ContextOutOfRange { index: usize, count: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("prompt {0} has no target structure")]
    MissingTarget(u32),

    #[error("accuracy curve is empty")]
    EmptyAccuracyCurve,

    #[error("no collapse point: accuracy never reaches and stays at zero")]
    NoCollapsePoint,

    #[error("no plateau onset: accuracy never flattens above zero")]
    NoPlateauOnset,

    #[error("convergence step must be positive")]
    InvalidConvergenceStep,

    #[error("no trajectories of length >= 2 after filtering")]
    NoTrajectories,

    #[error("need at least {k} trajectories for k = {k}, got {n}")]
    TooFewTrajectories { n: usize, k: usize },

    #[error("semantic labeling needs exactly 3 clusters, got {0}")]
    WrongClusterCount(usize),

    #[error("cluster(s) {labels} have no records at step {step}")]
    MissingCluster { labels: String, step: u64 },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

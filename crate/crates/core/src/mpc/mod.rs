//! Closed-loop model-predictive rollout with collision scoring, plus the
//! success check and benchmark metrics.

mod eval;
mod expert;
mod rollout;

pub use eval::{
    classical_result, evaluate, evaluate_classical, mean_std, success_check, FailureReason, Metrics, ProblemMetrics,
};
pub use expert::{scripted_expert, ExpertDenoiser};
pub use rollout::{
    execution_horizon, rollout, select_candidate, DiffusionPolicy, FnScorer, GeometricScorer, IterationTrace, Outcome,
    Policy, RolloutConfig, RolloutResult, Scorer,
};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate 9D rotation: {0}")]
    DegenerateRotation(&'static str),

    #[error("zero-norm quaternion")]
    ZeroQuaternion,

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("invalid kinematic template: {0}")]
    InvalidTemplate(String),

    #[error("template sampling rejected {0} consecutive draws")]
    SamplingExhausted(usize),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("objective returned a non-finite value at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("IK failed after {attempts} attempts (best cost {best_cost:e})")]
    IkFailed { attempts: usize, best_cost: f64 },

    #[error("unsupported degrees of freedom: {0}")]
    UnsupportedDof(usize),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("planning failed: {0}")]
    PlanningFailed(String),

    #[error("problem generation failed after {0} embodiments")]
    ProblemGenerationFailed(usize),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

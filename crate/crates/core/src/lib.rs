//! Cross-embodiment motion planning toolkit.
//!
//! Synthetic manipulators are sampled from kinematic templates, observed as
//! whole-body sequences of SE(3) link poses, and driven by predicted link-wise
//! relative transforms that are turned back into joint configurations with
//! whole-body IK. The crate also carries the classical planning pipeline used
//! to generate demonstrations, a diffusion-policy scaffold with
//! cross-embodiment attention masking, and a model-predictive rollout runtime
//! with geometric collision scoring.
//!
//! The geometric core (`linalg`, `se3`, `robot`, `kinematics`, `collision`,
//! `optimize`) is generic over [`Real`]; the aliases below fix it to `f64`,
//! which the planning and learning layers use throughout.

pub mod collision;
pub mod dataset;
pub mod error;
pub mod kinematics;
pub mod linalg;
pub mod mpc;
pub mod optimize;
pub mod planner;
pub mod policy;
pub mod robot;
pub mod scalar;
pub mod se3;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Vec3 = linalg::Vec3<f64>;
pub type Mat3 = linalg::Mat3<f64>;
pub type Pose = se3::Pose<f64>;
pub type Pose32 = se3::Pose<f32>;
pub type Pose9D = se3::Pose9D<f64>;
pub type Quaternion = se3::Quaternion<f64>;
pub type RobotModel = robot::RobotModel<f64>;
pub type RobotModel32 = robot::RobotModel<f32>;
pub type WholeBodyPose = kinematics::WholeBodyPose<f64>;
pub type TransformSet = kinematics::TransformSet<f64>;
/// Joint angles in radians, one per degree of freedom.
pub type JointConfig = Vec<f64>;
pub type Scene = collision::Scene<f64>;

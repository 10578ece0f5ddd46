//! Bound-constrained minimization and the IK problems built on it.

mod ik;
mod minimize;

pub use ik::{
    goal_ik, goal_ik_cost, goal_ik_with, goal_reached, groove, groove_derivative, position_cost, rotation_cost,
    sample_free_config, whole_body_cost, whole_body_ik, GoalIkOptions, IkSolution, WholeBodyIkOptions,
};
pub use minimize::{minimize, BoundConstrainedProblem, MinimizeOptions, SolveResult};

//! Sampling-based planning and the demonstration pipeline.

mod demos;
mod path;
mod problem;
mod rrt;

pub use demos::{
    demo_from_problem, gen_demos, generate_demo, DemoConfig, DemoDataset, DemoFailure, DemoRecord, DEMOS_KIND,
};
pub use path::{
    first_invalid_segment, path_length, path_valid, retime, segment_valid, shortcut, Path, EDGE_RESOLUTION,
    RETIME_STEP,
};
pub use problem::{
    embodiment_template, make_problem, make_problem_for, reach_bound, sample_endpoint_poses, PlanningProblem, ProblemConfig,
};
pub use rrt::{plan, plan_between, plan_retimed, rrt_connect, PlannerConfig};

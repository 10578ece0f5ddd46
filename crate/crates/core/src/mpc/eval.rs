//! Success criteria and aggregate benchmark metrics.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rollout::{rollout, Outcome, Policy, RolloutConfig, RolloutResult, Scorer};
use crate::dataset::derive_seed;
use crate::error::Result;
use crate::kinematics::end_effector_pose;
use crate::optimize::GoalIkOptions;
use crate::planner::{path_valid, plan_retimed, PlannerConfig, PlanningProblem, EDGE_RESOLUTION};
use crate::se3::rotation_angle_between;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    NotReached(Outcome),
    JointLimits,
    Collision,
    GoalTolerance,
}

impl std::fmt::Display for FailureReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::NotReached(o) => write!(f, "{o}"),
            Self::JointLimits => f.write_str("joint_limits"),
            Self::Collision => f.write_str("collision"),
            Self::GoalTolerance => f.write_str("goal_tolerance"),
        }
    }
}

/// Re-validates the executed trajectory densely against the exact geometry
/// and checks the final end-effector pose against the 1 cm / 5° gates.
pub fn success_check(result: &RolloutResult, problem: &PlanningProblem) -> Result<std::result::Result<(), FailureReason>> {
    if result.outcome != Outcome::Reached {
        return Ok(Err(FailureReason::NotReached(result.outcome)));
    }
    let robot = problem.robot()?;
    if !result.trajectory.iter().all(|q| robot.within_limits(q)) {
        return Ok(Err(FailureReason::JointLimits));
    }
    if !path_valid(&robot, &problem.scene, &result.trajectory, EDGE_RESOLUTION)? {
        return Ok(Err(FailureReason::Collision));
    }
    let last = result.trajectory.last().expect("trajectory holds the start");
    let ee = end_effector_pose(&robot, last)?;
    let gates = GoalIkOptions::default();
    let pos = (ee.translation - problem.goal_ee.translation).norm();
    let rot = rotation_angle_between(&ee.rotation, &problem.goal_ee.rotation);
    if pos >= gates.position_tolerance || rot >= gates.orientation_tolerance {
        return Ok(Err(FailureReason::GoalTolerance));
    }
    Ok(Ok(()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemMetrics {
    pub problem_id: usize,
    pub outcome: Outcome,
    pub success: bool,
    pub failure: Option<FailureReason>,
    pub path_length: f64,
    pub solution_time_s: f64,
    pub steps: usize,
}

impl ProblemMetrics {
    pub fn from_result(problem_id: usize, result: &RolloutResult, problem: &PlanningProblem) -> Result<Self> {
        let check = success_check(result, problem)?;
        Ok(Self {
            problem_id,
            outcome: result.outcome,
            success: check.is_ok(),
            failure: check.err(),
            path_length: crate::planner::path_length(&result.trajectory),
            solution_time_s: result.solution_time_s,
            steps: result.steps(),
        })
    }
}

/// Mean and population standard deviation; `None` for an empty sample.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    Some((m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rows: Vec<ProblemMetrics>,
}

impl Metrics {
    pub fn successes(&self) -> usize {
        self.rows.iter().filter(|r| r.success).count()
    }

    /// Success rate in percent.
    pub fn success_rate(&self) -> f64 {
        if self.rows.is_empty() {
            0.0
        } else {
            100.0 * self.successes() as f64 / self.rows.len() as f64
        }
    }

    fn over_successes(&self, f: impl Fn(&ProblemMetrics) -> f64) -> Option<(f64, f64)> {
        mean_std(&self.rows.iter().filter(|r| r.success).map(f).collect::<Vec<_>>())
    }

    pub fn path_length(&self) -> Option<(f64, f64)> {
        self.over_successes(|r| r.path_length)
    }

    pub fn solution_time(&self) -> Option<(f64, f64)> {
        self.over_successes(|r| r.solution_time_s)
    }

    /// One row per problem.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "problem_id,outcome,success,path_length,solution_time_s,steps")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{},{}", r.problem_id, r.outcome, r.success, r.path_length, r.solution_time_s, r.steps)?;
        }
        Ok(())
    }

    /// SR, PL and ST in one row; PL and ST are empty without successes.
    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let cell = |v: Option<(f64, f64)>| v.map_or((String::new(), String::new()), |(m, s)| (m.to_string(), s.to_string()));
        let (pl, pls) = cell(self.path_length());
        let (st, sts) = cell(self.solution_time());
        writeln!(w, "problems,success_rate,path_length_mean,path_length_std,solution_time_mean,solution_time_std")?;
        writeln!(w, "{},{},{pl},{pls},{st},{sts}", self.rows.len(), self.success_rate())?;
        Ok(())
    }
}

/// Rolls out every problem, in parallel, merged in problem order.
pub fn evaluate<P, S, F>(
    problems: &[PlanningProblem],
    make_policy: F,
    scorer: &S,
    config: &RolloutConfig,
    seed: u64,
) -> Result<Metrics>
where
    P: Policy,
    S: Scorer + ?Sized,
    F: Fn(usize, &PlanningProblem) -> Result<P> + Sync,
{
    let rows = problems
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let policy = make_policy(i, p)?;
            let r = rollout(p, &policy, scorer, config, derive_seed(seed, &[i as u64]))?;
            ProblemMetrics::from_result(i, &r, p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Metrics { rows })
}

/// Classical upper baseline: plan with full scene knowledge and report the
/// re-timed path as if executed.
pub fn classical_result(problem: &PlanningProblem, planner: &PlannerConfig, seed: u64) -> Result<RolloutResult> {
    let clock = Instant::now();
    let (trajectory, outcome) = match plan_retimed(problem, planner, seed) {
        Ok(p) => (p.waypoints, Outcome::Reached),
        Err(e) => {
            log::info!("classical planner failed: {e}");
            (vec![problem.start.clone()], Outcome::Timeout)
        }
    };
    Ok(RolloutResult { trajectory, outcome, scores: Vec::new(), solution_time_s: clock.elapsed().as_secs_f64(), trace: Vec::new() })
}

pub fn evaluate_classical(problems: &[PlanningProblem], planner: &PlannerConfig, seed: u64) -> Result<Metrics> {
    let rows = problems
        .par_iter()
        .enumerate()
        .map(|(i, p)| ProblemMetrics::from_result(i, &classical_result(p, planner, derive_seed(seed, &[i as u64]))?, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(Metrics { rows })
}

//! Receding-horizon rollout: sample a batch, score, execute a prefix of the
//! best candidate, repeat.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::score_steps;
use crate::dataset::derive_seed;
use crate::error::{Error, Result};
use crate::kinematics::end_effector_pose;
use crate::optimize::WholeBodyIkOptions;
use crate::planner::PlanningProblem;
use crate::policy::{infer, Denoiser, DiffusionSchedule, TokenLayout};
use crate::robot::FrameAssignment;
use crate::se3::pose_goal_error;
use crate::{JointConfig, Pose, RobotModel, Scene};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutConfig {
    pub batch: usize,
    pub prediction_horizon: usize,
    pub min_execution: usize,
    pub max_execution: usize,
    /// 9D end-effector error that ends the rollout.
    pub goal_threshold: f64,
    pub max_steps: usize,
    pub score_points: usize,
    /// Iterations without progress before the rollout counts as stuck.
    pub stuck_iterations: usize,
    pub stuck_tolerance: f64,
    /// Joint motion (max abs, rad) below which an iteration counts as idle.
    pub stuck_motion: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            batch: 16,
            prediction_horizon: 16,
            min_execution: 2,
            max_execution: 4,
            goal_threshold: 0.01,
            max_steps: 200,
            score_points: 4096,
            stuck_iterations: 5,
            stuck_tolerance: 1e-4,
            stuck_motion: 1e-3,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.batch == 0 {
            return bad("batch must be at least 1");
        }
        if self.min_execution == 0 || self.min_execution > self.max_execution {
            return bad("execution horizon range must satisfy 1 <= min <= max");
        }
        if self.max_execution > self.prediction_horizon {
            return bad("execution horizon exceeds the prediction horizon");
        }
        if self.score_points == 0 {
            return bad("score_points must be positive");
        }
        Ok(())
    }
}

/// Anything that proposes a joint-space chunk from the current state.
pub trait Policy: Sync {
    /// `None` marks a step whose joint configuration could not be recovered.
    fn propose(
        &self,
        robot: &RobotModel,
        frames: &FrameAssignment,
        q: &[f64],
        goal: &Pose,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Option<JointConfig>>>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn propose(
        &self,
        robot: &RobotModel,
        frames: &FrameAssignment,
        q: &[f64],
        goal: &Pose,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Option<JointConfig>>> {
        (**self).propose(robot, frames, q, goal, rng)
    }
}

/// Reverse diffusion through a denoiser, decoded with whole-body IK.
pub struct DiffusionPolicy<D> {
    pub layout: TokenLayout,
    pub schedule: DiffusionSchedule,
    pub denoiser: D,
    pub ik: WholeBodyIkOptions,
}

impl<D: Denoiser> DiffusionPolicy<D> {
    pub fn new(layout: TokenLayout, schedule: DiffusionSchedule, denoiser: D) -> Self {
        Self { layout, schedule, denoiser, ik: WholeBodyIkOptions::default() }
    }
}

impl<D: Denoiser> Policy for DiffusionPolicy<D> {
    fn propose(
        &self,
        robot: &RobotModel,
        frames: &FrameAssignment,
        q: &[f64],
        goal: &Pose,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Option<JointConfig>>> {
        infer(&self.layout, robot, frames, q, goal, &self.denoiser, &self.schedule, &self.ik, rng)
    }
}

/// Per-step collision contributions of a trajectory; the trajectory score
/// is their mean.
pub trait Scorer: Sync {
    fn step_scores(&self, robot: &RobotModel, scene: &Scene, trajectory: &[JointConfig], seed: u64) -> Result<Vec<f64>>;

    fn score(&self, robot: &RobotModel, scene: &Scene, trajectory: &[JointConfig], seed: u64) -> Result<f64> {
        let s = self.step_scores(robot, scene, trajectory, seed)?;
        Ok(if s.is_empty() { 0.0 } else { s.iter().sum::<f64>() / s.len() as f64 })
    }
}

/// Fraction of sampled robot surface points inside obstacles or other
/// links, labelled with the exact geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeometricScorer {
    pub points: usize,
}

impl Scorer for GeometricScorer {
    fn step_scores(&self, robot: &RobotModel, scene: &Scene, trajectory: &[JointConfig], seed: u64) -> Result<Vec<f64>> {
        score_steps(robot, scene, trajectory, self.points, seed)
    }
}

/// Adapts a plain function to [`Scorer`].
pub struct FnScorer<F>(pub F);

impl<F> Scorer for FnScorer<F>
where
    F: Fn(&RobotModel, &Scene, &[JointConfig]) -> Vec<f64> + Sync,
{
    fn step_scores(&self, robot: &RobotModel, scene: &Scene, trajectory: &[JointConfig], _: u64) -> Result<Vec<f64>> {
        Ok((self.0)(robot, scene, trajectory))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Reached,
    Timeout,
    IkFailure,
    Stuck,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Reached => "reached",
            Self::Timeout => "timeout",
            Self::IkFailure => "ik_failure",
            Self::Stuck => "stuck",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    /// Candidate scores; `None` for candidates without a usable first step.
    pub scores: Vec<Option<f64>>,
    pub selected: usize,
    pub executed: usize,
    pub goal_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    /// Start configuration followed by every executed step.
    pub trajectory: Vec<JointConfig>,
    pub outcome: Outcome,
    /// Score of the selected candidate at each iteration.
    pub scores: Vec<f64>,
    pub solution_time_s: f64,
    pub trace: Vec<IterationTrace>,
}

impl RolloutResult {
    pub fn steps(&self) -> usize {
        self.trajectory.len().saturating_sub(1)
    }

    pub fn write_trace<W: Write>(&self, mut w: W) -> Result<()> {
        for t in &self.trace {
            serde_json::to_writer(&mut w, t)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Lowest score, ties to the lowest index; `None` scores never win.
pub fn select_candidate(scores: &[Option<f64>]) -> Option<usize> {
    scores
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|s| (i, s)))
        .fold(None, |best: Option<(usize, f64)>, (i, s)| match best {
            Some((_, b)) if b <= s => best,
            _ => Some((i, s)),
        })
        .map(|(i, _)| i)
}

/// Longest prefix in `[min, max]` whose steps all score zero, else `min`,
/// never more than `available`.
pub fn execution_horizon(step_scores: &[f64], min: usize, max: usize, available: usize) -> usize {
    let clear = step_scores.iter().take_while(|s| **s == 0.0).count();
    let n = if clear >= min { clear.min(max) } else { min };
    n.min(available).max(1)
}

fn goal_error(robot: &RobotModel, q: &[f64], goal: &Pose) -> Result<f64> {
    Ok(pose_goal_error(&end_effector_pose(robot, q)?, goal))
}

struct Candidate {
    steps: Vec<JointConfig>,
    step_scores: Vec<f64>,
}

pub fn rollout<P: Policy + ?Sized, S: Scorer + ?Sized>(
    problem: &PlanningProblem,
    policy: &P,
    scorer: &S,
    config: &RolloutConfig,
    seed: u64,
) -> Result<RolloutResult> {
    config.validate()?;
    problem.validate()?;
    let clock = Instant::now();
    let robot = problem.robot()?;
    let goal = &problem.goal_ee;
    let mut q = problem.start.clone();
    let mut trajectory = vec![q.clone()];
    let mut scores = Vec::new();
    let mut trace = Vec::new();
    let mut err = goal_error(&robot, &q, goal)?;
    let mut idle = 0;
    let mut iteration = 0u64;
    let outcome = loop {
        if err < config.goal_threshold {
            break Outcome::Reached;
        }
        let remaining = config.max_steps - (trajectory.len() - 1);
        if remaining == 0 {
            break Outcome::Timeout;
        }
        let candidates: Vec<Option<Candidate>> = (0..config.batch)
            .into_par_iter()
            .map(|b| -> Result<Option<Candidate>> {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[iteration, b as u64]));
                let proposal = policy.propose(&robot, &problem.frames, &q, goal, &mut rng)?;
                let steps: Vec<JointConfig> =
                    proposal.into_iter().take(config.prediction_horizon).map_while(|s| s).collect();
                if steps.is_empty() {
                    return Ok(None);
                }
                let step_scores =
                    scorer.step_scores(&robot, &problem.scene, &steps, derive_seed(seed, &[iteration, b as u64, 1]))?;
                Ok(Some(Candidate { steps, step_scores }))
            })
            .collect::<Result<_>>()?;
        let cand_scores: Vec<Option<f64>> = candidates
            .iter()
            .map(|c| c.as_ref().map(|c| c.step_scores.iter().sum::<f64>() / c.step_scores.len() as f64))
            .collect();
        let Some(best) = select_candidate(&cand_scores) else {
            break Outcome::IkFailure;
        };
        let winner = candidates[best].as_ref().expect("selected candidate exists");
        let n = execution_horizon(
            &winner.step_scores,
            config.min_execution,
            config.max_execution,
            winner.steps.len().min(remaining),
        );
        trajectory.extend(winner.steps[..n].iter().cloned());
        let moved = winner.steps[n - 1].iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        q = winner.steps[n - 1].clone();
        scores.push(cand_scores[best].expect("selected score"));
        let previous = err;
        err = goal_error(&robot, &q, goal)?;
        trace.push(IterationTrace { scores: cand_scores, selected: best, executed: n, goal_error: err });
        // a path may lead away from the goal for a while; a lock also stops moving
        if previous - err < config.stuck_tolerance && moved < config.stuck_motion {
            idle += 1;
        } else {
            idle = 0;
        }
        iteration += 1;
        if idle >= config.stuck_iterations && err >= config.goal_threshold {
            break Outcome::Stuck;
        }
    };
    Ok(RolloutResult { trajectory, outcome, scores, solution_time_s: clock.elapsed().as_secs_f64(), trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn argmin_with_ties_and_gaps() {
        assert_eq!(select_candidate(&[Some(0.2), Some(0.0), Some(0.1)]), Some(1));
        assert_eq!(select_candidate(&[Some(0.1), Some(0.1)]), Some(0));
        assert_eq!(select_candidate(&[None, Some(0.3), Some(0.3)]), Some(1));
        assert_eq!(select_candidate(&[None, None]), None);
    }

    #[test]
    fn horizon_rule() {
        assert_eq!(execution_horizon(&[0.0; 16], 2, 4, 16), 4);
        assert_eq!(execution_horizon(&[0.0, 0.0, 0.0, 0.1], 2, 4, 16), 3);
        assert_eq!(execution_horizon(&[0.1; 16], 2, 4, 16), 2);
        assert_eq!(execution_horizon(&[0.0; 16], 2, 4, 1), 1);
    }

    proptest! {
        #[test]
        fn selection_is_the_first_minimum(scores in prop::collection::vec(prop::option::of(0.0f64..1.0), 1..20)) {
            match select_candidate(&scores) {
                None => prop_assert!(scores.iter().all(Option::is_none)),
                Some(i) => {
                    let best = scores.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
                    prop_assert_eq!(scores[i], Some(best));
                    prop_assert!(scores[..i].iter().all(|s| s.is_none_or(|v| v > best)));
                }
            }
        }

        #[test]
        fn executed_steps_stay_in_range(
            steps in prop::collection::vec(prop::sample::select(vec![0.0, 0.0, 0.5]), 1..17),
            available in 1usize..17,
        ) {
            let n = execution_horizon(&steps, 2, 4, available);
            prop_assert!(n >= 1 && n <= 4 && n <= available);
        }
    }
}

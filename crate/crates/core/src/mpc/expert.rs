//! A scripted denoiser that replays a precomputed joint-space plan.

use super::rollout::DiffusionPolicy;
use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, WholeBodyPose};
use crate::policy::{transform_tokens, Condition, Denoiser, DiffusionSchedule, TokenLayout};
use crate::robot::FrameAssignment;
use crate::se3::{from_9d, Pose9D};
use crate::{JointConfig, RobotModel};

/// Finds the plan waypoint closest to the observed whole-body pose and asks
/// for the transforms to the next `H` waypoints, holding the last one.
pub struct ExpertDenoiser {
    layout: TokenLayout,
    schedule: DiffusionSchedule,
    slots: Vec<usize>,
    plan: Vec<WholeBodyPose<f64>>,
}

impl ExpertDenoiser {
    pub fn new(
        layout: TokenLayout,
        schedule: DiffusionSchedule,
        robot: &RobotModel,
        frames: &FrameAssignment,
        plan: &[JointConfig],
    ) -> Result<Self> {
        if plan.is_empty() {
            return Err(Error::InvalidArgument("expert plan is empty".into()));
        }
        let plan = plan.iter().map(|q| forward_kinematics(robot, frames, q)).collect::<Result<Vec<_>>>()?;
        Ok(Self { slots: layout.link_slots(robot.dof())?, layout, schedule, plan })
    }

    fn observed(&self, condition: &Condition) -> Option<WholeBodyPose<f64>> {
        self.slots
            .iter()
            .map(|&s| from_9d(&Pose9D::from_slice(&condition.observation[s]).ok()?).ok())
            .collect::<Option<Vec<_>>>()
            .map(WholeBodyPose)
    }

    fn nearest(&self, now: &WholeBodyPose<f64>) -> usize {
        let dist = |p: &WholeBodyPose<f64>| -> f64 {
            p.0.iter().zip(&now.0).map(|(a, b)| a.to_9d().squared_distance(&b.to_9d())).sum()
        };
        (0..self.plan.len()).fold(0, |best, i| if dist(&self.plan[i]) < dist(&self.plan[best]) { i } else { best })
    }

    /// Clean query block for a condition.
    pub fn target(&self, condition: &Condition) -> Vec<f64> {
        let Some(now) = self.observed(condition) else {
            return vec![0.0; self.layout.query_len()];
        };
        let k = self.nearest(&now);
        let last = self.plan.len() - 1;
        let future: Vec<_> = (1..=self.layout.horizon).map(|h| self.plan[(k + h).min(last)].clone()).collect();
        transform_tokens(&self.layout, &now, &future).unwrap_or_else(|_| vec![0.0; self.layout.query_len()])
    }
}

impl Denoiser for ExpertDenoiser {
    fn predict(&self, noisy: &[f64], condition: &Condition, tau: usize) -> Vec<f64> {
        self.schedule.noise_towards(noisy, &self.target(condition), tau)
    }
}

/// The scripted expert as a full diffusion policy.
pub fn scripted_expert(
    robot: &RobotModel,
    frames: &FrameAssignment,
    plan: &[JointConfig],
) -> Result<DiffusionPolicy<ExpertDenoiser>> {
    let (layout, schedule) = (TokenLayout::default(), DiffusionSchedule::default());
    let d = ExpertDenoiser::new(layout, schedule.clone(), robot, frames, plan)?;
    Ok(DiffusionPolicy::new(layout, schedule, d))
}

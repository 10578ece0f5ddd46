//! Forward kinematics and the whole-body relative-transform formulation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat3;
use crate::robot::{FrameAssignment, RobotModel};
use crate::scalar::Real;
use crate::se3::Pose;

/// Per-link poses relative to the base; entry 0 is the base (identity), the
/// last entry the end-effector frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct WholeBodyPose<T>(pub Vec<Pose<T>>);

impl<T: Real> WholeBodyPose<T> {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn end_effector(&self) -> &Pose<T> {
        self.0.last().expect("whole-body pose has at least the base")
    }
}

/// Relative transforms per horizon step, one per link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TransformSet<T>(pub Vec<Vec<Pose<T>>>);

/// Joint frames of every link: `F_0 = I`, `F_{i+1} = F_i · Trans(tip_i) · Rot(axis_i, q_i)`.
pub fn link_frames<T: Real>(robot: &RobotModel<T>, q: &[T]) -> Result<Vec<Pose<T>>> {
    if q.len() != robot.dof() {
        return Err(Error::DimensionMismatch { expected: robot.dof(), got: q.len() });
    }
    let mut frames = Vec::with_capacity(robot.links.len());
    let mut current = Pose::identity();
    frames.push(current);
    for (i, (axis, angle)) in robot.joint_axes.iter().zip(q).enumerate() {
        let tip = current.transform_point(&robot.links[i].tip);
        let rotation = current.rotation * Mat3::from_axis_angle(axis, *angle);
        current = Pose::from_parts(rotation, tip);
        frames.push(current);
    }
    Ok(frames)
}

pub fn forward_kinematics<T: Real>(
    robot: &RobotModel<T>,
    frames: &FrameAssignment,
    q: &[T],
) -> Result<WholeBodyPose<T>> {
    frames.validate(robot)?;
    let joints = link_frames(robot, q)?;
    let mut poses: Vec<Pose<T>> =
        joints.iter().zip(&robot.links).zip(&frames.0).map(|((f, l), &k)| f.compose(&l.frames[k])).collect();
    poses[0] = Pose::identity();
    Ok(WholeBodyPose(poses))
}

/// End-effector pose; independent of the frame assignment.
pub fn end_effector_pose<T: Real>(robot: &RobotModel<T>, q: &[T]) -> Result<Pose<T>> {
    let joints = link_frames(robot, q)?;
    let last = robot.links.len() - 1;
    Ok(joints[last].compose(&robot.links[last].frames[0]))
}

/// `T = p_future · p_now⁻¹` per link and horizon step.
pub fn relative_transforms<T: Real>(
    p_now: &WholeBodyPose<T>,
    p_future: &[WholeBodyPose<T>],
) -> Result<TransformSet<T>> {
    let mut out = Vec::with_capacity(p_future.len());
    for step in p_future {
        if step.len() != p_now.len() {
            return Err(Error::DimensionMismatch { expected: p_now.len(), got: step.len() });
        }
        out.push(step.0.iter().zip(&p_now.0).map(|(f, n)| f.compose(&n.inverse())).collect());
    }
    Ok(TransformSet(out))
}

/// Left-multiplies each link pose by its transform.
pub fn apply_transforms<T: Real>(t: &TransformSet<T>, p_now: &WholeBodyPose<T>) -> Result<Vec<WholeBodyPose<T>>> {
    t.0.iter()
        .map(|step| {
            if step.len() != p_now.len() {
                return Err(Error::DimensionMismatch { expected: p_now.len(), got: step.len() });
            }
            Ok(WholeBodyPose(step.iter().zip(&p_now.0).map(|(tr, p)| tr.compose(p)).collect()))
        })
        .collect()
}

//! Goal (end-effector) IK and whole-body IK.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::minimize::{minimize, BoundConstrainedProblem, MinimizeOptions};
use crate::collision::{check_config, collision_cost, Scene};
use crate::error::{Error, Result};
use crate::kinematics::{end_effector_pose, forward_kinematics, WholeBodyPose};
use crate::robot::{FrameAssignment, RobotModel};
use crate::scalar::Real;
use crate::se3::{quaternion_distance, rotation_angle_between, Pose, Pose9D, Quaternion};

/// Groove cost `−exp(−d²/0.08) + 25·d⁴` of a distance `d`.
pub fn groove<T: Real>(d: T) -> T {
    let d2 = d * d;
    -(-d2 / T::lit(0.08)).exp() + T::lit(25.0) * d2 * d2
}

/// Analytic derivative of [`groove`] with respect to `d`.
pub fn groove_derivative<T: Real>(d: T) -> T {
    let d2 = d * d;
    d * T::lit(2.0 / 0.08) * (-d2 / T::lit(0.08)).exp() + T::lit(100.0) * d2 * d
}

pub fn position_cost<T: Real>(ee: &Pose<T>, goal: &Pose<T>) -> T {
    groove((ee.translation - goal.translation).norm())
}

pub fn rotation_cost<T: Real>(ee: &Pose<T>, goal: &Pose<T>) -> T {
    let a = Quaternion::from_rotation(&ee.rotation);
    let b = Quaternion::from_rotation(&goal.rotation);
    groove(quaternion_distance(&a, &b).unwrap_or_else(|_| T::PI()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GoalIkOptions {
    pub attempts: usize,
    pub iterations: usize,
    pub position_tolerance: f64,
    /// Radians.
    pub orientation_tolerance: f64,
}

impl Default for GoalIkOptions {
    fn default() -> Self {
        Self { attempts: 5, iterations: 500, position_tolerance: 0.01, orientation_tolerance: 5f64.to_radians() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IkSolution<T> {
    pub joints: Vec<T>,
    pub cost: T,
    pub attempts: usize,
}

/// `c_pos + c_rot + c_coll` at `q`.
pub fn goal_ik_cost<T: Real>(robot: &RobotModel<T>, scene: &Scene<T>, goal: &Pose<T>, q: &[T]) -> T {
    match end_effector_pose(robot, q) {
        Ok(ee) => {
            position_cost(&ee, goal)
                + rotation_cost(&ee, goal)
                + collision_cost(robot, scene, q).unwrap_or_else(|_| T::infinity())
        }
        Err(_) => T::nan(),
    }
}

/// End-effector gates plus joint limits and collision freedom.
pub fn goal_reached<T: Real>(
    robot: &RobotModel<T>,
    scene: &Scene<T>,
    goal: &Pose<T>,
    q: &[T],
    opts: &GoalIkOptions,
) -> Result<bool> {
    let ee = end_effector_pose(robot, q)?;
    let pos = (ee.translation - goal.translation).norm().as_f64();
    let rot = rotation_angle_between(&ee.rotation, &goal.rotation).as_f64();
    Ok(pos < opts.position_tolerance
        && rot < opts.orientation_tolerance
        && robot.within_limits(q)
        && !check_config(robot, scene, q)?.any())
}

fn uniform_config<T: Real, R: Rng + ?Sized>(robot: &RobotModel<T>, rng: &mut R) -> Vec<T> {
    robot.joint_limits.iter().map(|(l, u)| T::lit(rng.random_range(l.as_f64()..=u.as_f64()))).collect()
}

/// Uniform over the collision-free part of the joint box, by rejection.
pub fn sample_free_config<T: Real, R: Rng + ?Sized>(robot: &RobotModel<T>, scene: &Scene<T>, rng: &mut R) -> Result<Vec<T>> {
    let mut q = uniform_config(robot, rng);
    for _ in 0..FREE_SAMPLE_TRIES {
        if !check_config(robot, scene, &q)?.any() {
            break;
        }
        q = uniform_config(robot, rng);
    }
    Ok(q)
}

const FREE_SAMPLE_TRIES: usize = 1000;

pub fn goal_ik<T: Real>(robot: &RobotModel<T>, scene: &Scene<T>, goal: &Pose<T>, seed: u64) -> Result<IkSolution<T>> {
    goal_ik_with(robot, scene, goal, &GoalIkOptions::default(), &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Minimizes the goal cost from uniformly random starts until the gates pass.
pub fn goal_ik_with<T: Real, R: Rng + ?Sized>(
    robot: &RobotModel<T>,
    scene: &Scene<T>,
    goal: &Pose<T>,
    opts: &GoalIkOptions,
    rng: &mut R,
) -> Result<IkSolution<T>> {
    if !goal.is_valid(T::lit(1e-6)) {
        return Err(Error::InvalidPose("goal rotation is not orthonormal".into()));
    }
    let mopts = MinimizeOptions::with_iterations(opts.iterations);
    let mut best = f64::INFINITY;
    for attempt in 1..=opts.attempts {
        let problem = BoundConstrainedProblem::new(
            |q: &[T]| goal_ik_cost(robot, scene, goal, q),
            robot.lower(),
            robot.upper(),
            sample_free_config(robot, scene, rng)?,
        )?;
        let r = minimize(&problem, &mopts)?;
        best = best.min(r.cost.as_f64());
        if goal_reached(robot, scene, goal, &r.solution, opts)? {
            return Ok(IkSolution { joints: r.solution, cost: r.cost, attempts: attempt });
        }
    }
    Err(Error::IkFailed { attempts: opts.attempts, best_cost: best })
}

#[derive(Clone, Debug, PartialEq)]
pub struct WholeBodyIkOptions {
    pub attempts: usize,
    /// Acceptance threshold on the summed squared 9D error.
    pub cost_threshold: f64,
    pub iterations: usize,
    pub perturbation: f64,
}

impl Default for WholeBodyIkOptions {
    fn default() -> Self {
        Self { attempts: 10, cost_threshold: 1e-4, iterations: 100, perturbation: 0.1 }
    }
}

/// Sum over links of squared 9D differences to `target`.
pub fn whole_body_cost<T: Real>(
    robot: &RobotModel<T>,
    frames: &FrameAssignment,
    target: &[Pose9D<T>],
    q: &[T],
) -> T {
    match forward_kinematics(robot, frames, q) {
        Ok(wb) => wb.0.iter().zip(target).map(|(p, t)| p.to_9d().squared_distance(t)).sum(),
        Err(_) => T::nan(),
    }
}

pub fn whole_body_ik<T: Real, R: Rng + ?Sized>(
    robot: &RobotModel<T>,
    frames: &FrameAssignment,
    target: &WholeBodyPose<T>,
    j_init: &[T],
    opts: &WholeBodyIkOptions,
    rng: &mut R,
) -> Result<IkSolution<T>> {
    frames.validate(robot)?;
    if target.len() != robot.token_count() {
        return Err(Error::DimensionMismatch { expected: robot.token_count(), got: target.len() });
    }
    if j_init.len() != robot.dof() {
        return Err(Error::DimensionMismatch { expected: robot.dof(), got: j_init.len() });
    }
    let target9: Vec<Pose9D<T>> = target.0.iter().map(Pose::to_9d).collect();
    let cost = |q: &[T]| whole_body_cost(robot, frames, &target9, q);
    let kappa = T::lit(opts.cost_threshold);
    let mut start = j_init.to_vec();
    robot.clamp(&mut start);
    let c0 = cost(&start);
    if c0 <= T::lit(1e-18) {
        return Ok(IkSolution { joints: start, cost: c0, attempts: 1 });
    }
    let mopts = MinimizeOptions::with_iterations(opts.iterations);
    let mut best: Option<(Vec<T>, T)> = None;
    for attempt in 1..=opts.attempts {
        let problem = BoundConstrainedProblem::new(cost, robot.lower(), robot.upper(), start.clone())?;
        let r = minimize(&problem, &mopts)?;
        if r.cost <= kappa {
            return Ok(IkSolution { joints: r.solution, cost: r.cost, attempts: attempt });
        }
        if best.as_ref().is_none_or(|(_, c)| r.cost < *c) {
            best = Some((r.solution, r.cost));
        }
        start = j_init
            .iter()
            .map(|v| {
                let n: f64 = StandardNormal.sample(rng);
                *v + T::lit(opts.perturbation * n)
            })
            .collect();
        robot.clamp(&mut start);
    }
    Err(Error::IkFailed { attempts: opts.attempts, best_cost: best.map_or(f64::INFINITY, |b| b.1.as_f64()) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::{compile_robot, sample_frames, Family};
    use proptest::prelude::*;

    #[test]
    fn groove_spot_values() {
        assert_eq!(groove(0.0f64), -1.0);
        let oracle = -(-0.04f64 / 0.08).exp() + 25.0 * 0.2f64.powi(4);
        assert!((groove(0.2f64) - oracle).abs() < 1e-15);
        assert!((groove(0.2f64) + 0.5665).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn groove_gradient_check(d in 0.01f64..2.0) {
            let h = 1e-6;
            let fd = (groove(d + h) - groove(d - h)) / (2.0 * h);
            let an = groove_derivative(d);
            prop_assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-3));
        }
    }

    #[test]
    fn fixed_point_returns_initial_config() {
        let r = compile_robot::<f64>(&Family::Sawyer7.nominal()).unwrap();
        let fa = sample_frames(&r, 1);
        let q = vec![0.2, -0.4, 0.6, 0.1, -0.9, 0.3, 1.2];
        let target = forward_kinematics(&r, &fa, &q).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = whole_body_ik(&r, &fa, &target, &q, &WholeBodyIkOptions::default(), &mut rng).unwrap();
        assert_eq!(s.joints, q);
    }

    #[test]
    fn recovers_small_perturbation() {
        let r = compile_robot::<f64>(&Family::Ur6.nominal()).unwrap();
        let fa = sample_frames(&r, 2);
        let q = vec![0.3, -0.5, 0.9, -0.2, 0.7, 0.1];
        let target = forward_kinematics(&r, &fa, &q).unwrap();
        let init: Vec<f64> = q.iter().enumerate().map(|(i, v)| v + if i % 2 == 0 { 0.05 } else { -0.05 }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = whole_body_ik(&r, &fa, &target, &init, &WholeBodyIkOptions::default(), &mut rng).unwrap();
        for (a, b) in s.joints.iter().zip(&q) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn infeasible_whole_body_target_fails() {
        let r = compile_robot::<f64>(&Family::Ur6.nominal()).unwrap();
        let fa = sample_frames(&r, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let garbage = WholeBodyPose(
            (0..r.token_count())
                .map(|i| {
                    let q = Quaternion::from_axis_angle(&crate::linalg::Vec3::new(1.0, 2.0, 3.0).normalized(), i as f64);
                    Pose::from_parts(q.to_rotation(), crate::linalg::Vec3::new(2.0 + i as f64, -1.0, 3.0))
                })
                .collect(),
        );
        let opts = WholeBodyIkOptions { attempts: 3, ..WholeBodyIkOptions::default() };
        let e = whole_body_ik(&r, &fa, &garbage, &[0.0; 6], &opts, &mut rng).unwrap_err();
        assert!(matches!(e, Error::IkFailed { attempts: 3, best_cost } if best_cost > 1e-4));
    }

    #[test]
    fn goal_ik_reaches_fk_target() {
        let r = compile_robot::<f64>(&Family::Sawyer7.nominal()).unwrap();
        let q = vec![0.4, -0.3, 0.5, 1.0, -0.6, 0.8, 0.2];
        let goal = end_effector_pose(&r, &q).unwrap();
        let s = goal_ik(&r, &Scene::empty(), &goal, 9).unwrap();
        assert!(goal_reached(&r, &Scene::empty(), &goal, &s.joints, &GoalIkOptions::default()).unwrap());
    }

    #[test]
    fn unreachable_goal_fails() {
        let r = compile_robot::<f64>(&Family::Ur6.nominal()).unwrap();
        let goal = Pose::from_translation(crate::linalg::Vec3::new(3.0, 0.0, 0.5));
        let opts = GoalIkOptions { attempts: 2, iterations: 100, ..GoalIkOptions::default() };
        let e = goal_ik_with(&r, &Scene::empty(), &goal, &opts, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(e, Error::IkFailed { attempts: 2, .. }));
    }
}

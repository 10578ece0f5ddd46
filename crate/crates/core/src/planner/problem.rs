//! Planning problems: an embodiment, a scene and IK-solved endpoints.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::path::{path_valid, EDGE_RESOLUTION};
use crate::dataset::derive_seed;
use crate::collision::is_valid_config;
use crate::error::{Error, Result};
use crate::kinematics::end_effector_pose;
use crate::optimize::{goal_ik_with, sample_free_config, GoalIkOptions};
use crate::robot::{compile_robot, sample_frames_with, sample_template, Family, FrameAssignment, Strategy, TemplateFile};
use crate::{Pose, RobotModel, Scene};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanningProblem {
    pub template: TemplateFile,
    pub frames: FrameAssignment,
    pub scene: Scene,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub goal_ee: Pose,
    /// Embodiments drawn before both endpoints solved.
    #[serde(default = "one")]
    pub embodiment_attempts: usize,
}

fn one() -> usize {
    1
}

impl PlanningProblem {
    pub fn robot(&self) -> Result<RobotModel> {
        compile_robot(&self.template.template()?)
    }

    /// Both endpoints within bounds and collision-free.
    pub fn validate(&self) -> Result<()> {
        let robot = self.robot()?;
        self.frames.validate(&robot)?;
        for (name, q) in [("start", &self.start), ("goal", &self.goal)] {
            if q.len() != robot.dof() {
                return Err(Error::DimensionMismatch { expected: robot.dof(), got: q.len() });
            }
            if !path_valid(&robot, &self.scene, std::slice::from_ref(q), EDGE_RESOLUTION)? {
                return Err(Error::InvalidArgument(format!("{name} configuration is out of bounds or in collision")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemConfig {
    pub max_embodiments: usize,
    pub ik_attempts: usize,
    pub ik_iterations: usize,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        let ik = GoalIkOptions::default();
        Self { max_embodiments: 25, ik_attempts: ik.attempts, ik_iterations: ik.iterations }
    }
}

const EMBODIMENT_STREAM: u64 = 0;
const IK_STREAM: u64 = 1;
const FRAMES_STREAM: u64 = 2;

/// Template of the `k`-th embodiment `make_problem` draws for `seed`.
pub fn embodiment_template(family: Family, strategy: Strategy, seed: u64, k: usize) -> Result<TemplateFile> {
    let s = derive_seed(seed, &[EMBODIMENT_STREAM, k as u64]);
    Ok(TemplateFile::new(&sample_template(family, strategy, s)?, Some(family), Some(strategy), Some(s)))
}

/// Upper bound on the distance from the base to the end-effector frame.
pub fn reach_bound(robot: &RobotModel) -> f64 {
    let last = robot.links.len() - 1;
    let ee_offset = robot.links[last].frames.iter().map(|f| f.translation.norm()).fold(0.0, f64::max);
    robot.links.iter().map(|l| l.tip.norm()).sum::<f64>() + ee_offset
}

fn ik_options(config: &ProblemConfig) -> GoalIkOptions {
    GoalIkOptions { attempts: config.ik_attempts, iterations: config.ik_iterations, ..GoalIkOptions::default() }
}

/// Goal IK of both endpoints on one embodiment; `Ok(None)` when either is
/// out of reach or does not solve.
fn try_embodiment(
    template: TemplateFile,
    scene: &Scene,
    ee_start: &Pose,
    ee_goal: &Pose,
    seed: u64,
    k: usize,
    ik: &GoalIkOptions,
) -> Result<Option<PlanningProblem>> {
    let robot = compile_robot(&template.template()?)?;
    let reach = reach_bound(&robot);
    if ee_start.translation.norm() > reach || ee_goal.translation.norm() > reach {
        log::debug!("embodiment {k}: endpoint beyond reach {reach:.3}");
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[IK_STREAM, k as u64]));
    let solved = goal_ik_with(&robot, scene, ee_start, ik, &mut rng)
        .and_then(|s| Ok((s, goal_ik_with(&robot, scene, ee_goal, ik, &mut rng)?)));
    match solved {
        Ok((start, goal)) => {
            let mut frng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[FRAMES_STREAM, k as u64]));
            Ok(Some(PlanningProblem {
                frames: sample_frames_with(&robot, &mut frng),
                template,
                scene: scene.clone(),
                start: start.joints,
                goal: goal.joints,
                goal_ee: *ee_goal,
                embodiment_attempts: k + 1,
            }))
        }
        Err(Error::IkFailed { .. }) => {
            log::debug!("embodiment {k}: endpoint IK failed");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Draws embodiments until goal IK solves both endpoint poses.
pub fn make_problem(
    family: Family,
    strategy: Strategy,
    scene: &Scene,
    ee_start: &Pose,
    ee_goal: &Pose,
    seed: u64,
    config: &ProblemConfig,
) -> Result<PlanningProblem> {
    let ik = ik_options(config);
    for k in 0..config.max_embodiments {
        let template = embodiment_template(family, strategy, seed, k)?;
        if let Some(p) = try_embodiment(template, scene, ee_start, ee_goal, seed, k, &ik)? {
            return Ok(p);
        }
    }
    Err(Error::ProblemGenerationFailed(config.max_embodiments))
}

/// [`make_problem`] restricted to one given embodiment.
pub fn make_problem_for(
    template: &TemplateFile,
    scene: &Scene,
    ee_start: &Pose,
    ee_goal: &Pose,
    seed: u64,
    config: &ProblemConfig,
) -> Result<PlanningProblem> {
    try_embodiment(template.clone(), scene, ee_start, ee_goal, seed, 0, &ik_options(config))?
        .ok_or(Error::ProblemGenerationFailed(1))
}

/// End-effector poses of two random collision-free configurations of `robot`.
pub fn sample_endpoint_poses(robot: &RobotModel, scene: &Scene, seed: u64) -> Result<(Pose, Pose)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = sample_free_config(robot, scene, &mut rng)?;
    let b = sample_free_config(robot, scene, &mut rng)?;
    // rejection sampling hands back its last draw when it runs out of tries
    if !(is_valid_config(robot, scene, &a)? && is_valid_config(robot, scene, &b)?) {
        return Err(Error::PlanningFailed("no collision-free endpoint configuration found".into()));
    }
    Ok((end_effector_pose(robot, &a)?, end_effector_pose(robot, &b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vec3;

    #[test]
    fn unreachable_endpoint_fails() {
        let t = embodiment_template(Family::Ur6, Strategy::Normal, 1, 0).unwrap();
        let robot = compile_robot(&t.template().unwrap()).unwrap();
        let far = Pose::from_translation(Vec3::new(reach_bound(&robot) + 2.0, 0.0, 0.0));
        let err = make_problem(Family::Ur6, Strategy::Normal, &Scene::empty(), &far, &far, 1, &ProblemConfig::default());
        assert!(matches!(err, Err(Error::ProblemGenerationFailed(25))));
    }

    #[test]
    fn reach_bound_covers_random_configs() {
        let t = embodiment_template(Family::Sawyer7, Strategy::Uniform, 4, 0).unwrap();
        let robot = compile_robot(&t.template().unwrap()).unwrap();
        let bound = reach_bound(&robot);
        for s in 0..50 {
            let (a, b) = sample_endpoint_poses(&robot, &Scene::empty(), s).unwrap();
            assert!(a.translation.norm() <= bound && b.translation.norm() <= bound);
        }
    }

    #[test]
    fn fixed_seed_same_problem() {
        let t = embodiment_template(Family::Sawyer7, Strategy::Normal, 9, 0).unwrap();
        let robot = compile_robot(&t.template().unwrap()).unwrap();
        let (a, b) = sample_endpoint_poses(&robot, &Scene::empty(), 3).unwrap();
        let run = || make_problem(Family::Sawyer7, Strategy::Normal, &Scene::empty(), &a, &b, 9, &ProblemConfig::default());
        let p = run().unwrap();
        assert_eq!(p, run().unwrap());
        p.validate().unwrap();
    }
}

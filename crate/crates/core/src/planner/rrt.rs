//! Bidirectional RRT (connect variant) in joint space.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::path::{path_valid, retime, segment_valid, shortcut, Path, EDGE_RESOLUTION, RETIME_STEP};
use super::problem::PlanningProblem;
use crate::error::{Error, Result};
use crate::{RobotModel, Scene};

/// Budgets are counted in iterations, so a seed fixes the result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Longest tree edge, Euclidean in joint space.
    pub max_extend: f64,
    pub search_iterations: usize,
    pub shortcut_iterations: usize,
    pub max_path_length: f64,
    /// Record wall-clock times on the path (makes output nondeterministic).
    pub record_timing: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            max_extend: 0.3,
            search_iterations: 4000,
            shortcut_iterations: 200,
            max_path_length: 10.0,
            record_timing: false,
        }
    }
}

struct Tree {
    nodes: Vec<Vec<f64>>,
    parent: Vec<usize>,
}

enum Extend {
    Reached,
    Advanced,
    Trapped,
}

impl Tree {
    fn new(root: Vec<f64>) -> Self {
        Self { nodes: vec![root], parent: vec![0] }
    }

    fn nearest(&self, q: &[f64]) -> usize {
        let d2 = |n: &Vec<f64>| n.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        (0..self.nodes.len()).min_by(|&a, &b| d2(&self.nodes[a]).total_cmp(&d2(&self.nodes[b]))).unwrap_or(0)
    }

    /// Root-to-node configurations.
    fn branch(&self, mut i: usize) -> Vec<Vec<f64>> {
        let mut out = vec![self.nodes[i].clone()];
        while i != 0 {
            i = self.parent[i];
            out.push(self.nodes[i].clone());
        }
        out.reverse();
        out
    }
}

struct Search<'a> {
    robot: &'a RobotModel,
    scene: &'a Scene,
    max_extend: f64,
}

impl Search<'_> {
    fn extend(&self, tree: &mut Tree, target: &[f64]) -> Result<Extend> {
        let near = tree.nearest(target);
        let from = &tree.nodes[near];
        let d = from.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let (q, reached) = if d <= self.max_extend {
            (target.to_vec(), true)
        } else {
            let t = self.max_extend / d;
            (from.iter().zip(target).map(|(a, b)| a + (b - a) * t).collect(), false)
        };
        if !segment_valid(self.robot, self.scene, from, &q, EDGE_RESOLUTION)? {
            return Ok(Extend::Trapped);
        }
        tree.nodes.push(q);
        tree.parent.push(near);
        Ok(if reached { Extend::Reached } else { Extend::Advanced })
    }

    fn connect(&self, tree: &mut Tree, target: &[f64]) -> Result<Extend> {
        loop {
            match self.extend(tree, target)? {
                Extend::Advanced => continue,
                other => return Ok(other),
            }
        }
    }
}

fn uniform(robot: &RobotModel, rng: &mut impl Rng) -> Vec<f64> {
    robot.joint_limits.iter().map(|&(l, u)| rng.random_range(l..=u)).collect()
}

/// Raw tree path from `start` to `goal`, before shortcutting.
pub fn rrt_connect<R: Rng + ?Sized>(
    robot: &RobotModel,
    scene: &Scene,
    start: &[f64],
    goal: &[f64],
    config: &PlannerConfig,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    for (name, q) in [("start", start), ("goal", goal)] {
        if q.len() != robot.dof() {
            return Err(Error::DimensionMismatch { expected: robot.dof(), got: q.len() });
        }
        if !path_valid(robot, scene, &[q.to_vec()], EDGE_RESOLUTION)? {
            return Err(Error::PlanningFailed(format!("{name} configuration is invalid")));
        }
    }
    if start == goal {
        return Ok(vec![start.to_vec()]);
    }
    if segment_valid(robot, scene, start, goal, EDGE_RESOLUTION)? {
        return Ok(vec![start.to_vec(), goal.to_vec()]);
    }
    let search = Search { robot, scene, max_extend: config.max_extend };
    let mut a = Tree::new(start.to_vec());
    let mut b = Tree::new(goal.to_vec());
    let mut a_is_start = true;
    let mut rng = ChaCha8Rng::seed_from_u64(rng.random());
    for _ in 0..config.search_iterations {
        let q_rand = uniform(robot, &mut rng);
        if !matches!(search.extend(&mut a, &q_rand)?, Extend::Trapped) {
            let q_new = a.nodes[a.nodes.len() - 1].clone();
            if matches!(search.connect(&mut b, &q_new)?, Extend::Reached) {
                let mut from_a = a.branch(a.nodes.len() - 1);
                let mut from_b = b.branch(b.nodes.len() - 1);
                from_b.reverse();
                from_b.remove(0);
                from_a.extend(from_b);
                if !a_is_start {
                    from_a.reverse();
                }
                return Ok(from_a);
            }
        }
        std::mem::swap(&mut a, &mut b);
        a_is_start = !a_is_start;
    }
    Err(Error::PlanningFailed(format!("no path within {} iterations", config.search_iterations)))
}

/// Search, shortcut and length check; the result is validated densely.
pub fn plan_between<R: Rng + ?Sized>(
    robot: &RobotModel,
    scene: &Scene,
    start: &[f64],
    goal: &[f64],
    config: &PlannerConfig,
    rng: &mut R,
) -> Result<Path> {
    let t0 = Instant::now();
    let raw = Path::new(rrt_connect(robot, scene, start, goal, config, rng)?);
    let t1 = Instant::now();
    let mut path = shortcut(robot, scene, &raw, config.shortcut_iterations, rng)?;
    if config.record_timing {
        path.plan_time_s = Some((t1 - t0).as_secs_f64());
        path.shortcut_time_s = Some(t1.elapsed().as_secs_f64());
    }
    let length = path.length();
    if length > config.max_path_length {
        return Err(Error::PlanningFailed(format!("path length {length:.3} exceeds {}", config.max_path_length)));
    }
    assert!(path_valid(robot, scene, &path.waypoints, EDGE_RESOLUTION)?, "planner returned an invalid path");
    Ok(path)
}

pub fn plan(problem: &PlanningProblem, config: &PlannerConfig, seed: u64) -> Result<Path> {
    let robot = problem.robot()?;
    plan_between(&robot, &problem.scene, &problem.start, &problem.goal, config, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `plan` followed by re-timing to the training step bound.
pub fn plan_retimed(problem: &PlanningProblem, config: &PlannerConfig, seed: u64) -> Result<Path> {
    let robot = problem.robot()?;
    let path = plan(problem, config, seed)?;
    retime(&robot, &problem.scene, &path, RETIME_STEP)
}

//! Configuration-level collision checks, clearances and the IK collision cost.

use serde::{Deserialize, Serialize};

use super::distance::{aabb_overlap, point_segment_distance, segment_box_signed_distance, segment_segment_distance};
use super::scene::{Obstacle, Scene};
use crate::error::Result;
use crate::kinematics::link_frames;
use crate::robot::{Capsule, RobotModel};
use crate::scalar::Real;

/// Broad-phase radius for self-collision clearances.
pub const SELF_RADIUS: f64 = 0.1;
/// Broad-phase radius for environment clearances.
pub const ENV_RADIUS: f64 = 0.3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionReport {
    /// Per link (base first): intersects an obstacle or a non-adjacent link.
    pub in_collision: Vec<bool>,
    /// Per link: intersects an obstacle.
    pub environment: Vec<bool>,
    /// Non-adjacent link pairs `(i, j)`, `i < j`, that intersect.
    pub self_pairs: Vec<(usize, usize)>,
}

impl CollisionReport {
    pub fn any(&self) -> bool {
        self.in_collision.iter().any(|c| *c)
    }

    pub fn colliding_links(&self) -> impl Iterator<Item = usize> + '_ {
        self.in_collision.iter().enumerate().filter(|(_, c)| **c).map(|(i, _)| i)
    }
}

/// Signed clearances per link; a self pair `(i, j)` is listed under `i < j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LinkDistances<T> {
    pub environment: Vec<Vec<T>>,
    pub self_collision: Vec<Vec<T>>,
}

impl<T: Real> LinkDistances<T> {
    pub fn iter(&self) -> impl Iterator<Item = T> + '_ {
        self.environment.iter().chain(&self.self_collision).flatten().copied()
    }
}

/// Collision capsules of every link in the base frame.
pub fn posed_capsules<T: Real>(robot: &RobotModel<T>, q: &[T]) -> Result<Vec<Vec<Capsule<T>>>> {
    let frames = link_frames(robot, q)?;
    Ok(robot
        .links
        .iter()
        .zip(&frames)
        .map(|(l, f)| l.collision.iter().map(|c| c.transformed(f)).collect())
        .collect())
}

/// Signed clearance between a capsule and an obstacle surface.
pub fn capsule_obstacle_clearance<T: Real>(c: &Capsule<T>, o: &Obstacle<T>) -> T {
    match o {
        Obstacle::Cuboid { center, half_extents } => segment_box_signed_distance(&c.a, &c.b, center, half_extents) - c.radius,
        Obstacle::Sphere { center, radius } => point_segment_distance(center, &c.a, &c.b) - c.radius - *radius,
    }
}

pub fn capsule_capsule_clearance<T: Real>(a: &Capsule<T>, b: &Capsule<T>) -> T {
    segment_segment_distance(&a.a, &a.b, &b.a, &b.b) - a.radius - b.radius
}

fn non_adjacent_pairs<T: Real>(robot: &RobotModel<T>) -> impl Iterator<Item = (usize, usize)> + '_ {
    let n = robot.links.len();
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j))).filter(move |&(i, j)| !robot.adjacent(i, j))
}

/// Exact capsule-level collision check; a clearance below zero is a collision.
pub fn check_config<T: Real>(robot: &RobotModel<T>, scene: &Scene<T>, q: &[T]) -> Result<CollisionReport> {
    let caps = posed_capsules(robot, q)?;
    Ok(check_capsules(robot, scene, &caps))
}

pub(crate) fn check_capsules<T: Real>(robot: &RobotModel<T>, scene: &Scene<T>, caps: &[Vec<Capsule<T>>]) -> CollisionReport {
    let n = caps.len();
    let obstacle_boxes: Vec<_> = scene.obstacles.iter().map(Obstacle::aabb).collect();
    let environment: Vec<bool> = caps
        .iter()
        .map(|link| {
            link.iter().any(|c| {
                let bb = c.aabb();
                scene
                    .obstacles
                    .iter()
                    .zip(&obstacle_boxes)
                    .any(|(o, ob)| aabb_overlap(&bb, ob, T::zero()) && capsule_obstacle_clearance(c, o) < T::zero())
            })
        })
        .collect();
    let self_pairs: Vec<(usize, usize)> = non_adjacent_pairs(robot)
        .filter(|&(i, j)| {
            caps[i].iter().any(|a| {
                caps[j].iter().any(|b| aabb_overlap(&a.aabb(), &b.aabb(), T::zero()) && capsule_capsule_clearance(a, b) < T::zero())
            })
        })
        .collect();
    let mut in_collision = environment.clone();
    for &(i, j) in &self_pairs {
        in_collision[i] = true;
        in_collision[j] = true;
    }
    debug_assert_eq!(in_collision.len(), n);
    CollisionReport { in_collision, environment, self_pairs }
}

/// True when `q` is within limits and collision-free.
pub fn is_valid_config<T: Real>(robot: &RobotModel<T>, scene: &Scene<T>, q: &[T]) -> Result<bool> {
    Ok(robot.within_limits(q) && !check_config(robot, scene, q)?.any())
}

/// Clearances of every primitive pair whose bounding boxes come within the
/// given radii of each other.
pub fn min_distances<T: Real>(
    robot: &RobotModel<T>,
    scene: &Scene<T>,
    q: &[T],
    self_radius: T,
    env_radius: T,
) -> Result<LinkDistances<T>> {
    let caps = posed_capsules(robot, q)?;
    let obstacle_boxes: Vec<_> = scene.obstacles.iter().map(Obstacle::aabb).collect();
    let environment = caps
        .iter()
        .map(|link| {
            link.iter()
                .flat_map(|c| {
                    let bb = c.aabb();
                    scene
                        .obstacles
                        .iter()
                        .zip(&obstacle_boxes)
                        .filter(move |(_, ob)| aabb_overlap(&bb, ob, env_radius))
                        .map(move |(o, _)| capsule_obstacle_clearance(c, o))
                })
                .collect()
        })
        .collect();
    let mut self_collision = vec![Vec::new(); caps.len()];
    for (i, j) in non_adjacent_pairs(robot) {
        for a in &caps[i] {
            for b in &caps[j] {
                if aabb_overlap(&a.aabb(), &b.aabb(), self_radius) {
                    self_collision[i].push(capsule_capsule_clearance(a, b));
                }
            }
        }
    }
    Ok(LinkDistances { environment, self_collision })
}

/// `g(x) = 1.8^(0.01 − x)` below the 0.01 m margin, zero above it.
pub fn clearance_penalty<T: Real>(x: T) -> T {
    let margin = T::lit(0.01);
    if x - margin < T::zero() {
        T::lit(1.8).powf(margin - x)
    } else {
        T::zero()
    }
}

pub fn collision_cost<T: Real>(robot: &RobotModel<T>, scene: &Scene<T>, q: &[T]) -> Result<T> {
    let d = min_distances(robot, scene, q, T::lit(SELF_RADIUS), T::lit(ENV_RADIUS))?;
    Ok(d.iter().map(clearance_penalty).sum())
}

//! Labeled surface point clouds and the trajectory collision score.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::query::{check_capsules, posed_capsules, CollisionReport};
use super::scene::{Obstacle, Scene};
use crate::error::{Error, Result};
use crate::kinematics::link_frames;
use crate::linalg::Vec3;
use crate::robot::{Cuboid, Cylinder, RobotModel};
use crate::scalar::Real;

/// Default number of robot points per scored step.
pub const DEFAULT_SCORE_POINTS: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointLabel {
    Link(usize),
    /// Shared by every obstacle point.
    Obstacle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LabeledPoint<T> {
    pub position: Vec3<T>,
    pub label: PointLabel,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LabeledPointCloud<T> {
    pub points: Vec<LabeledPoint<T>>,
}

impl<T: Real> LabeledPointCloud<T> {
    pub fn robot_points(&self) -> impl Iterator<Item = &LabeledPoint<T>> {
        self.points.iter().filter(|p| p.label != PointLabel::Obstacle)
    }
}

enum Surface<'a, T> {
    Cylinder(&'a Cylinder<T>),
    Cuboid(&'a Cuboid<T>),
}

fn cylinder_area<T: Real>(c: &Cylinder<T>) -> T {
    T::two() * T::PI() * c.radius * (c.length + c.radius)
}

fn box_area<T: Real>(h: &Vec3<T>) -> T {
    T::lit(8.0) * (h[0] * h[1] + h[1] * h[2] + h[0] * h[2])
}

/// Surface area of every link's visual geometry.
pub fn link_areas<T: Real>(robot: &RobotModel<T>) -> Vec<T> {
    robot
        .links
        .iter()
        .map(|l| {
            l.cylinders.iter().map(cylinder_area).sum::<T>()
                + l.cuboids.iter().map(|c| box_area(&c.half_extents)).sum::<T>()
        })
        .collect()
}

fn weighted<T: Real>(weights: &[T]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(weights.iter().map(|w| w.as_f64()))
        .map_err(|e| Error::InvalidArgument(format!("area weights: {e}")))
}

fn unit<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.random::<f64>())
}

fn sample_cylinder<T: Real, R: Rng + ?Sized>(c: &Cylinder<T>, rng: &mut R) -> Vec3<T> {
    let lateral = c.length / (c.length + c.radius);
    let theta = unit::<T, _>(rng) * T::two() * T::PI();
    let (s, co) = theta.sin_cos();
    let local = if unit::<T, _>(rng) < lateral {
        Vec3::new(c.radius * co, c.radius * s, (unit::<T, _>(rng) - T::half()) * c.length)
    } else {
        let rho = c.radius * unit::<T, _>(rng).sqrt();
        let z = if rng.random::<bool>() { T::half() } else { -T::half() } * c.length;
        Vec3::new(rho * co, rho * s, z)
    };
    c.frame.transform_point(&local)
}

fn sample_box<T: Real, R: Rng + ?Sized>(h: &Vec3<T>, rng: &mut R) -> Vec3<T> {
    // face pairs normal to x, y, z weighted by area
    let areas = [h[1] * h[2], h[0] * h[2], h[0] * h[1]];
    let total = areas[0] + areas[1] + areas[2];
    let mut u = unit::<T, _>(rng) * total;
    let mut axis = 2;
    for (k, a) in areas.iter().enumerate() {
        if u < *a {
            axis = k;
            break;
        }
        u = u - *a;
    }
    let mut p = Vec3::zeros();
    for k in 0..3 {
        p[k] = (unit::<T, _>(rng) * T::two() - T::one()) * h[k];
    }
    p[axis] = if rng.random::<bool>() { h[axis] } else { -h[axis] };
    p
}

fn sample_obstacle<T: Real, R: Rng + ?Sized>(o: &Obstacle<T>, rng: &mut R) -> Vec3<T> {
    match o {
        Obstacle::Cuboid { center, half_extents } => *center + sample_box(half_extents, rng),
        Obstacle::Sphere { center, radius } => {
            let d = rand_distr::StandardNormal;
            let v: Vec3<T> = loop {
                let v = Vec3::new(d.sample(rng), d.sample(rng), d.sample(rng));
                let n: f64 = v.norm();
                if n > 1e-12 {
                    break v.scale(1.0 / n).cast();
                }
            };
            *center + v.scale(*radius)
        }
    }
}

/// Area-uniform samples over every link surface (labeled by link) and every
/// obstacle surface (labeled `Obstacle`).
pub fn sample_surface_points<T: Real>(
    robot: &RobotModel<T>,
    scene: &Scene<T>,
    q: &[T],
    n_robot: usize,
    n_obstacle: usize,
    seed: u64,
) -> Result<LabeledPointCloud<T>> {
    if n_robot == 0 {
        return Err(Error::InvalidArgument("n_robot must be positive".into()));
    }
    let frames = link_frames(robot, q)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut surfaces = Vec::new();
    let mut areas = Vec::new();
    for (i, l) in robot.links.iter().enumerate() {
        for c in &l.cylinders {
            surfaces.push((i, Surface::Cylinder(c)));
            areas.push(cylinder_area(c));
        }
        for c in &l.cuboids {
            surfaces.push((i, Surface::Cuboid(c)));
            areas.push(box_area(&c.half_extents));
        }
    }
    let pick = weighted(&areas)?;
    let mut points = Vec::with_capacity(n_robot + n_obstacle);
    for _ in 0..n_robot {
        let (i, s) = &surfaces[pick.sample(&mut rng)];
        let local = match s {
            Surface::Cylinder(c) => sample_cylinder(c, &mut rng),
            Surface::Cuboid(c) => c.pose.transform_point(&sample_box(&c.half_extents, &mut rng)),
        };
        points.push(LabeledPoint { position: frames[*i].transform_point(&local), label: PointLabel::Link(*i) });
    }
    if !scene.is_empty() && n_obstacle > 0 {
        let areas: Vec<T> = scene.obstacles.iter().map(Obstacle::surface_area).collect();
        let pick = weighted(&areas)?;
        for _ in 0..n_obstacle {
            let o = &scene.obstacles[pick.sample(&mut rng)];
            points.push(LabeledPoint { position: sample_obstacle(o, &mut rng), label: PointLabel::Obstacle });
        }
    }
    Ok(LabeledPointCloud { points })
}

/// Robot points take their link's collision state; obstacle points get no label.
pub fn label_collisions<T: Real>(cloud: &LabeledPointCloud<T>, report: &CollisionReport) -> Vec<Option<bool>> {
    cloud
        .points
        .iter()
        .map(|p| match p.label {
            PointLabel::Link(i) => Some(report.in_collision.get(i).copied().unwrap_or(false)),
            PointLabel::Obstacle => None,
        })
        .collect()
}

/// More than 0.1% of the robot points are in collision.
pub fn binary_collision_condition(labels: &[Option<bool>]) -> bool {
    let (ones, total) = labels.iter().flatten().fold((0usize, 0usize), |(o, t), y| (o + *y as usize, t + 1));
    total > 0 && ones as f64 / total as f64 > 0.001
}

/// `s = (1/HN) Σ_h Σ_i y_i` over robot points of every step.
pub fn score_from_labels(steps: &[Vec<Option<bool>>]) -> f64 {
    let (ones, total) = steps
        .iter()
        .flat_map(|s| s.iter().flatten())
        .fold((0usize, 0usize), |(o, t), y| (o + *y as usize, t + 1));
    if total == 0 {
        0.0
    } else {
        ones as f64 / total as f64
    }
}

/// Link label of each of `n` area-uniform robot points. Equivalent in
/// distribution to the labels of [`sample_surface_points`].
pub fn sample_link_counts<T: Real, R: Rng + ?Sized>(robot: &RobotModel<T>, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    let pick = weighted(&link_areas(robot))?;
    let mut counts = vec![0; robot.links.len()];
    for _ in 0..n {
        counts[pick.sample(rng)] += 1;
    }
    Ok(counts)
}

/// Per-step fraction of `n_points` robot points in collision.
pub fn score_steps<T: Real>(
    robot: &RobotModel<T>,
    scene: &Scene<T>,
    waypoints: &[Vec<T>],
    n_points: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_points == 0 {
        return Err(Error::InvalidArgument("n_points must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    waypoints
        .iter()
        .map(|q| {
            let caps = posed_capsules(robot, q)?;
            let report = check_capsules(robot, scene, &caps);
            let counts = sample_link_counts(robot, n_points, &mut rng)?;
            let ones: usize = report.colliding_links().map(|i| counts[i]).sum();
            Ok(ones as f64 / n_points as f64)
        })
        .collect()
}

/// Collision score of a joint trajectory with the geometric oracle as labeler.
pub fn score_trajectory<T: Real>(
    robot: &RobotModel<T>,
    scene: &Scene<T>,
    waypoints: &[Vec<T>],
    n_points: usize,
    seed: u64,
) -> Result<f64> {
    let steps = score_steps(robot, scene, waypoints, n_points, seed)?;
    Ok(if steps.is_empty() { 0.0 } else { steps.iter().sum::<f64>() / steps.len() as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::query::check_config;
    use crate::robot::{compile_robot, make_cylinder, Axis, Family, Link};

    fn labels(ones: usize, n: usize) -> Vec<Option<bool>> {
        (0..n).map(|i| Some(i < ones)).collect()
    }

    #[test]
    fn binary_condition_threshold() {
        assert!(!binary_collision_condition(&labels(0, 4096)));
        assert!(!binary_collision_condition(&labels(4, 4096)));
        assert!(binary_collision_condition(&labels(5, 4096)));
        // obstacle points do not dilute the ratio
        let mut l = labels(4, 3000);
        l.extend(std::iter::repeat_n(None, 10_000));
        assert!(binary_collision_condition(&l));
    }

    #[test]
    fn eq4_counts() {
        let clear = labels(0, 100);
        let hit = labels(30, 100);
        assert!((score_from_labels(&[clear.clone(), hit]) - 0.15).abs() < 1e-15);
        assert_eq!(score_from_labels(&[clear.clone(), clear]), 0.0);
        assert_eq!(score_from_labels(&[labels(100, 100), labels(100, 100)]), 1.0);
    }

    #[test]
    fn unit_cube_faces_are_uniform() {
        let r = compile_robot::<f64>(&Family::Ur6.nominal()).unwrap();
        let s = Scene::new(vec![Obstacle::cuboid([3.0, 0.0, 0.0], [0.5; 3])]).unwrap();
        let cloud = sample_surface_points(&r, &s, &[0.0; 6], 10, 6000, 1).unwrap();
        let mut faces = [0usize; 6];
        for p in cloud.points.iter().filter(|p| p.label == PointLabel::Obstacle) {
            let d = p.position - Vec3::new(3.0, 0.0, 0.0);
            let k = (0..3).find(|&k| (d[k].abs() - 0.5).abs() < 1e-12).unwrap();
            faces[2 * k + (d[k] > 0.0) as usize] += 1;
        }
        // binomial(6000, 1/6): sigma ≈ 28.9
        for f in faces {
            assert!((f as f64 - 1000.0).abs() < 3.0 * 28.87, "{faces:?}");
        }
    }

    #[test]
    fn empty_scene_has_only_robot_points() {
        let r = compile_robot::<f64>(&Family::Sawyer7.nominal()).unwrap();
        let cloud = sample_surface_points(&r, &Scene::empty(), &[0.0; 7], 500, 500, 2).unwrap();
        assert_eq!(cloud.points.len(), 500);
        assert!(cloud.points.iter().all(|p| matches!(p.label, PointLabel::Link(i) if i >= 1)));
        assert!(sample_surface_points(&r, &Scene::empty(), &[0.0; 7], 0, 5, 2).is_err());
    }

    #[test]
    fn identical_links_get_equal_shares() {
        let cyl = || Link::from_cylinders(vec![make_cylinder(Axis::Z, 1.0, Vec3::zeros(), 0.3, 0.04)]);
        let r = RobotModel::new(
            vec![Link::fixed_base(), cyl(), cyl()],
            vec![Vec3::basis(2), Vec3::basis(2)],
            vec![(-1.0, 1.0); 2],
        )
        .unwrap();
        let cloud = sample_surface_points(&r, &Scene::empty(), &[0.0, 0.0], 4000, 0, 3).unwrap();
        let a = cloud.points.iter().filter(|p| p.label == PointLabel::Link(1)).count() as f64;
        // binomial(4000, 1/2): sigma ≈ 31.6
        assert!((a - 2000.0).abs() < 3.0 * 31.63);
    }

    #[test]
    fn labels_follow_report() {
        let r = compile_robot::<f64>(&Family::Sawyer7.nominal()).unwrap();
        let q = [0.0; 7];
        let cloud = sample_surface_points(&r, &Scene::empty(), &q, 300, 0, 4).unwrap();
        let clear = check_config(&r, &Scene::empty(), &q).unwrap();
        assert!(label_collisions(&cloud, &clear).iter().all(|y| *y == Some(false)));
        let mut one = clear.clone();
        one.in_collision[3] = true;
        for (p, y) in cloud.points.iter().zip(label_collisions(&cloud, &one)) {
            assert_eq!(y, Some(p.label == PointLabel::Link(3)));
        }
        let boxed = Scene::new(vec![Obstacle::cuboid([0.0; 3], [5.0; 3])]).unwrap();
        let cloud = sample_surface_points(&r, &boxed, &q, 300, 50, 4).unwrap();
        let rep = check_config(&r, &boxed, &q).unwrap();
        let y = label_collisions(&cloud, &rep);
        assert!(y.iter().flatten().all(|v| *v));
        assert_eq!(y.iter().filter(|v| v.is_none()).count(), 50);
    }

    #[test]
    fn trajectory_scores_are_bounded() {
        let r = compile_robot::<f64>(&Family::Sawyer7.nominal()).unwrap();
        let traj = vec![vec![0.0; 7]; 3];
        assert_eq!(score_trajectory(&r, &Scene::empty(), &traj, 256, 0).unwrap(), 0.0);
        let boxed = Scene::new(vec![Obstacle::cuboid([0.0; 3], [5.0; 3])]).unwrap();
        assert_eq!(score_trajectory(&r, &boxed, &traj, 256, 0).unwrap(), 1.0);
    }
}

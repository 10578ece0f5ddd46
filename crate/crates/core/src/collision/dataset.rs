//! Class-balanced joint-noise collision dataset built from demonstrations.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::points::{sample_link_counts, DEFAULT_SCORE_POINTS};
use super::query::check_config;
use crate::dataset::{read_jsonl, write_jsonl, DatasetHeader};
use crate::error::{Error, Result};
use crate::planner::DemoRecord;
use crate::{RobotModel, Scene};

pub const COLLISION_KIND: &str = "collision";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollisionDataConfig {
    /// Robot surface points behind each binary label.
    pub points: usize,
    /// Extra draws per demonstration allowed while balancing the classes.
    pub balance_draws_per_demo: usize,
}

impl Default for CollisionDataConfig {
    fn default() -> Self {
        Self { points: DEFAULT_SCORE_POINTS, balance_draws_per_demo: 200 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionRecord {
    /// Index of the source demonstration.
    pub template_ref: usize,
    pub joint_config: Vec<f64>,
    pub eta: f64,
    pub per_link_collision: Vec<bool>,
    pub binary_label: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollisionDataset {
    pub header: DatasetHeader,
    pub records: Vec<CollisionRecord>,
}

impl CollisionDataset {
    pub fn positives(&self) -> usize {
        self.records.iter().filter(|r| r.binary_label).count()
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        write_jsonl(w, &self.header, &self.records)
    }

    pub fn read<B: BufRead>(r: B) -> Result<Self> {
        let (header, records) = read_jsonl(r)?;
        Ok(Self { header, records })
    }
}

/// `j + η·ε`, `ε ~ N(0, I)`, clamped to the joint limits.
pub fn perturb<R: Rng + ?Sized>(robot: &RobotModel, q: &[f64], eta: f64, rng: &mut R) -> Vec<f64> {
    let mut out: Vec<f64> = q
        .iter()
        .map(|v| {
            let e: f64 = StandardNormal.sample(rng);
            v + eta * e
        })
        .collect();
    robot.clamp(&mut out);
    out
}

/// Per-link collision flags and the point-fraction binary label of `q`.
pub fn label_config<R: Rng + ?Sized>(
    robot: &RobotModel,
    scene: &Scene,
    q: &[f64],
    points: usize,
    rng: &mut R,
) -> Result<(Vec<bool>, bool)> {
    let report = check_config(robot, scene, q)?;
    let counts = sample_link_counts(robot, points, rng)?;
    let ones: usize = report.colliding_links().map(|i| counts[i]).sum();
    Ok((report.in_collision, ones as f64 / points as f64 > 0.001))
}

struct Source {
    robot: RobotModel,
    scene: Scene,
    waypoints: Vec<Vec<f64>>,
}

impl Source {
    fn draw<R: Rng + ?Sized>(&self, index: usize, points: usize, rng: &mut R) -> Result<CollisionRecord> {
        let n = self.waypoints.len();
        let k = if n > 2 { rng.random_range(1..n - 1) } else { rng.random_range(0..n) };
        let eta = rng.random_range(0.0..1.0);
        let q = perturb(&self.robot, &self.waypoints[k], eta, rng);
        let (per_link_collision, binary_label) = label_config(&self.robot, &self.scene, &q, points, rng)?;
        Ok(CollisionRecord { template_ref: index, joint_config: q, eta, per_link_collision, binary_label })
    }
}

/// One perturbed intermediate waypoint per demonstration, then extra draws
/// from random demonstrations until the two classes are the same size.
pub fn gen_collision_dataset(demos: &[DemoRecord], seed: u64, config: &CollisionDataConfig) -> Result<CollisionDataset> {
    if demos.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if config.points == 0 {
        return Err(Error::InvalidArgument("points must be positive".into()));
    }
    let sources = demos
        .iter()
        .map(|d| {
            if d.waypoints.is_empty() {
                return Err(Error::InvalidArgument("demonstration without waypoints".into()));
            }
            Ok(Source { robot: d.robot()?, scene: d.scene.clone(), waypoints: d.waypoints.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(2 * demos.len());
    for (i, s) in sources.iter().enumerate() {
        records.push(s.draw(i, config.points, &mut rng)?);
    }
    let mut pos = records.iter().filter(|r| r.binary_label).count();
    let mut neg = records.len() - pos;
    let mut budget = config.balance_draws_per_demo * demos.len();
    while pos != neg && budget > 0 {
        budget -= 1;
        let i = rng.random_range(0..sources.len());
        let r = sources[i].draw(i, config.points, &mut rng)?;
        if r.binary_label == (pos < neg) {
            if r.binary_label {
                pos += 1;
            } else {
                neg += 1;
            }
            records.push(r);
        }
    }
    if pos != neg {
        log::warn!("class balancing ran out of draws ({pos} positive, {neg} negative); dropping the excess");
        let keep = pos.min(neg);
        let (mut kp, mut kn) = (0, 0);
        records.retain(|r| {
            let c = if r.binary_label { &mut kp } else { &mut kn };
            *c += 1;
            *c <= keep
        });
    }
    let header = DatasetHeader::new(COLLISION_KIND, config, seed)?;
    Ok(CollisionDataset { header, records })
}

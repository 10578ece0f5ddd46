//! Joint-space paths: length, dense validation, shortcutting and re-timing.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::collision::check_config;
use crate::error::{Error, Result};
use crate::{RobotModel, Scene};

/// Per-joint resolution at which straight segments are validated.
pub const EDGE_RESOLUTION: f64 = 0.02;
/// Per-joint displacement bound between consecutive re-timed waypoints.
pub const RETIME_STEP: f64 = 0.05;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub waypoints: Vec<Vec<f64>>,
    /// Wall-clock search time, when recorded.
    #[serde(default)]
    pub plan_time_s: Option<f64>,
    #[serde(default)]
    pub shortcut_time_s: Option<f64>,
}

impl Path {
    pub fn new(waypoints: Vec<Vec<f64>>) -> Self {
        Self { waypoints, ..Self::default() }
    }

    pub fn length(&self) -> f64 {
        path_length(&self.waypoints)
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn max_abs_delta(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + (y - x) * t).collect()
}

/// Sum of Euclidean distances between consecutive waypoints.
pub fn path_length(waypoints: &[Vec<f64>]) -> f64 {
    waypoints.windows(2).map(|w| distance(&w[0], &w[1])).sum()
}

/// Number of equal pieces that keep every per-joint step within `step`.
fn pieces(a: &[f64], b: &[f64], step: f64) -> usize {
    // the small slack absorbs rounding in exact multiples such as 0.5 / 0.05
    ((max_abs_delta(a, b) / step) - 1e-9).ceil().max(1.0) as usize
}

fn config_free(robot: &RobotModel, scene: &Scene, q: &[f64]) -> Result<bool> {
    Ok(robot.within_limits(q) && !check_config(robot, scene, q)?.any())
}

/// True when every configuration on the straight segment, sampled at
/// `resolution` per joint and including both ends, is in bounds and free.
pub fn segment_valid(robot: &RobotModel, scene: &Scene, a: &[f64], b: &[f64], resolution: f64) -> Result<bool> {
    let n = pieces(a, b, resolution);
    for k in 0..=n {
        if !config_free(robot, scene, &lerp(a, b, k as f64 / n as f64))? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Index of the first segment (or lone waypoint) that fails dense validation.
pub fn first_invalid_segment(
    robot: &RobotModel,
    scene: &Scene,
    waypoints: &[Vec<f64>],
    resolution: f64,
) -> Result<Option<usize>> {
    if let [only] = waypoints {
        return Ok((!config_free(robot, scene, only)?).then_some(0));
    }
    for (i, w) in waypoints.windows(2).enumerate() {
        if !segment_valid(robot, scene, &w[0], &w[1], resolution)? {
            return Ok(Some(i));
        }
    }
    Ok(None)
}

pub fn path_valid(robot: &RobotModel, scene: &Scene, waypoints: &[Vec<f64>], resolution: f64) -> Result<bool> {
    Ok(!waypoints.is_empty() && first_invalid_segment(robot, scene, waypoints, resolution)?.is_none())
}

/// Point at arc length `s` along the path, with the index of its segment.
fn point_at(waypoints: &[Vec<f64>], cumulative: &[f64], s: f64) -> (usize, Vec<f64>) {
    let i = cumulative.partition_point(|c| *c <= s).clamp(1, waypoints.len() - 1) - 1;
    let seg = cumulative[i + 1] - cumulative[i];
    let t = if seg > 0.0 { ((s - cumulative[i]) / seg).clamp(0.0, 1.0) } else { 0.0 };
    (i, lerp(&waypoints[i], &waypoints[i + 1], t))
}

/// Replaces random sub-paths by straight segments when the segment is valid
/// and strictly shorter; `budget` is the number of attempts.
pub fn shortcut<R: Rng + ?Sized>(
    robot: &RobotModel,
    scene: &Scene,
    path: &Path,
    budget: usize,
    rng: &mut R,
) -> Result<Path> {
    let mut wp = path.waypoints.clone();
    for _ in 0..budget {
        if wp.len() < 3 {
            break;
        }
        let cumulative: Vec<f64> = std::iter::once(0.0)
            .chain(wp.windows(2).scan(0.0, |acc, w| {
                *acc += distance(&w[0], &w[1]);
                Some(*acc)
            }))
            .collect();
        let total = cumulative[cumulative.len() - 1];
        if total <= 0.0 {
            break;
        }
        let (mut s1, mut s2) = (rng.random_range(0.0..=total), rng.random_range(0.0..=total));
        if s1 > s2 {
            std::mem::swap(&mut s1, &mut s2);
        }
        // snap near-endpoint draws so the path ends can be cut as well
        if s1 < 0.02 * total {
            s1 = 0.0;
        }
        if s2 > 0.98 * total {
            s2 = total;
        }
        let (i, a) = point_at(&wp, &cumulative, s1);
        let (j, b) = point_at(&wp, &cumulative, s2);
        if i == j {
            continue;
        }
        let a = if s1 == 0.0 { wp[0].clone() } else { a };
        let b = if s2 == total { wp[wp.len() - 1].clone() } else { b };
        let mut candidate: Vec<Vec<f64>> = wp[..=i].to_vec();
        if distance(&a, &wp[i]) > 0.0 {
            candidate.push(a.clone());
        }
        if distance(&b, &wp[j + 1]) > 0.0 {
            candidate.push(b.clone());
        }
        candidate.extend_from_slice(&wp[j + 1..]);
        if path_length(&candidate) >= path_length(&wp) - 1e-12 {
            continue;
        }
        // the split pieces sample different points than the segments they came from
        let mut ok = true;
        for w in candidate[i..candidate.len() - (wp.len() - j - 2)].windows(2) {
            if !segment_valid(robot, scene, &w[0], &w[1], EDGE_RESOLUTION)? {
                ok = false;
                break;
            }
        }
        if ok {
            wp = candidate;
        }
    }
    Ok(Path { waypoints: wp, ..path.clone() })
}

/// Linear interpolation so consecutive waypoints differ by at most `max_step`
/// per joint. Original waypoints are kept bit-exactly; split segments are
/// re-validated at the edge resolution.
pub fn retime(robot: &RobotModel, scene: &Scene, path: &Path, max_step: f64) -> Result<Path> {
    if !(max_step > 0.0) {
        return Err(Error::InvalidArgument(format!("retime step must be positive, got {max_step}")));
    }
    let Some(first) = path.waypoints.first() else {
        return Ok(path.clone());
    };
    let mut out = vec![first.clone()];
    for w in path.waypoints.windows(2) {
        // new waypoints sit on the segment's own validation grid, so
        // re-timing never introduces a configuration that was not checked
        let m = pieces(&w[0], &w[1], EDGE_RESOLUTION).max(pieces(&w[0], &w[1], max_step));
        let grid = max_abs_delta(&w[0], &w[1]) / m as f64;
        let stride = if grid > 0.0 { ((max_step / grid) + 1e-9).floor().max(1.0) as usize } else { m };
        let mut at = 0;
        while at < m {
            let next = (at + stride).min(m);
            if stride < m {
                for i in at + 1..=next {
                    if !config_free(robot, scene, &lerp(&w[0], &w[1], i as f64 / m as f64))? {
                        return Err(Error::PlanningFailed("re-timed segment in collision".into()));
                    }
                }
            }
            out.push(if next == m { w[1].clone() } else { lerp(&w[0], &w[1], next as f64 / m as f64) });
            at = next;
        }
    }
    assert!(
        out.windows(2).all(|w| max_abs_delta(&w[0], &w[1]) <= max_step * (1.0 + 1e-9)),
        "re-timed path violates the step bound"
    );
    Ok(Path { waypoints: out, ..path.clone() })
}

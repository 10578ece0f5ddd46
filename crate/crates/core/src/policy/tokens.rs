//! Pose-token sequence layout, attention masks and link position embeddings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, relative_transforms, WholeBodyPose};
use crate::robot::FrameAssignment;
use crate::se3::Pose9D;
use crate::RobotModel;

/// Identity rotation in the 9D layout, zero translation.
pub const IDENTITY_9D: [f64; 9] = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0];

/// Token order: `D` observation tokens, the goal token, then `D × H` query
/// tokens grouped by horizon step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenLayout {
    pub d_tok: usize,
    pub horizon: usize,
}

impl Default for TokenLayout {
    fn default() -> Self {
        Self { d_tok: 8, horizon: 16 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Token {
    Observation { link: usize },
    Goal,
    Query { step: usize, link: usize },
}

impl TokenLayout {
    pub fn total(&self) -> usize {
        self.d_tok * (self.horizon + 1) + 1
    }

    pub fn condition_count(&self) -> usize {
        self.d_tok + 1
    }

    pub fn query_count(&self) -> usize {
        self.d_tok * self.horizon
    }

    /// Length of a flattened query block of 9D tokens.
    pub fn query_len(&self) -> usize {
        9 * self.query_count()
    }

    pub fn observation(&self, link: usize) -> usize {
        link
    }

    pub fn goal(&self) -> usize {
        self.d_tok
    }

    pub fn query(&self, step: usize, link: usize) -> usize {
        self.d_tok + 1 + step * self.d_tok + link
    }

    pub fn decode(&self, index: usize) -> Token {
        let d = self.d_tok;
        match index {
            i if i < d => Token::Observation { link: i },
            i if i == d => Token::Goal,
            i => Token::Query { step: (i - d - 1) / d, link: (i - d - 1) % d },
        }
    }

    /// Slot of each robot link: links in chain order, the end effector in
    /// the last slot, so a shorter chain leaves the slots before it empty.
    pub fn link_slots(&self, dof: usize) -> Result<Vec<usize>> {
        if dof == 0 || dof + 1 > self.d_tok {
            return Err(Error::UnsupportedDof(dof));
        }
        Ok((0..dof).chain(std::iter::once(self.d_tok - 1)).collect())
    }

    /// Per-slot availability for a `dof`-joint robot.
    pub fn availability(&self, dof: usize) -> Result<Vec<bool>> {
        let mut out = vec![false; self.d_tok];
        for s in self.link_slots(dof)? {
            out[s] = true;
        }
        Ok(out)
    }
}

/// Square boolean matrix; `true` lets the row token attend the column token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionMask {
    pub size: usize,
    data: Vec<bool>,
}

impl AttentionMask {
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.size + col]
    }

    fn set(&mut self, row: usize, col: usize) {
        self.data[row * self.size + col] = true;
    }

    pub fn row(&self, row: usize) -> &[bool] {
        &self.data[row * self.size..(row + 1) * self.size]
    }
}

/// Kinematic and morphology mask. Condition tokens attend each other;
/// query `(h, l)` attends the conditions, queries `(h, l' ≤ l)` and
/// `(h − 1, l)`. Unavailable link slots are never attended.
pub fn build_masks(dof: usize, d_tok: usize, horizon: usize) -> Result<AttentionMask> {
    let layout = TokenLayout { d_tok, horizon };
    let avail = layout.availability(dof)?;
    let n = layout.total();
    let mut m = AttentionMask { size: n, data: vec![false; n * n] };
    let conditions: Vec<usize> =
        (0..d_tok).filter(|&l| avail[l]).map(|l| layout.observation(l)).chain([layout.goal()]).collect();
    for row in 0..n {
        for &c in &conditions {
            m.set(row, c);
        }
    }
    for h in 0..horizon {
        for l in 0..d_tok {
            let row = layout.query(h, l);
            for a in (0..=l).filter(|&a| avail[a]) {
                m.set(row, layout.query(h, a));
            }
            if h > 0 && avail[l] {
                m.set(row, layout.query(h - 1, l));
            }
        }
    }
    Ok(m)
}

/// Fixed sinusoidal embedding per link slot, reused at every horizon step.
pub fn sinusoidal_lpe(d_tok: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::InvalidArgument(format!("embedding dimension must be even and positive, got {dim}")));
    }
    Ok((0..d_tok)
        .map(|pos| {
            (0..dim / 2)
                .flat_map(|i| {
                    let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / dim as f64);
                    [angle.sin(), angle.cos()]
                })
                .collect()
        })
        .collect())
}

/// Condition tokens: observed link poses and the goal end-effector pose.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub observation: Vec<[f64; 9]>,
    pub goal: [f64; 9],
    pub available: Vec<bool>,
}

impl Condition {
    /// Flattened condition tokens, masked slots zeroed.
    pub fn flat(&self) -> Vec<f64> {
        self.observation
            .iter()
            .zip(&self.available)
            .flat_map(|(t, a)| if *a { *t } else { [0.0; 9] })
            .chain(self.goal)
            .collect()
    }
}

/// Slot-ordered 9D tokens of a whole-body pose; empty slots hold zeros.
pub fn pose_tokens(layout: &TokenLayout, pose: &WholeBodyPose<f64>) -> Result<Vec<[f64; 9]>> {
    let slots = layout.link_slots(pose.len() - 1)?;
    let mut out = vec![[0.0; 9]; layout.d_tok];
    for (p, s) in pose.0.iter().zip(slots) {
        out[s] = p.to_9d().to_array();
    }
    Ok(out)
}

pub fn make_condition(
    layout: &TokenLayout,
    robot: &RobotModel,
    frames: &FrameAssignment,
    q: &[f64],
    goal: &crate::Pose,
) -> Result<(Condition, WholeBodyPose<f64>)> {
    let p = forward_kinematics(robot, frames, q)?;
    let cond = Condition {
        observation: pose_tokens(layout, &p)?,
        goal: goal.to_9d().to_array(),
        available: layout.availability(robot.dof())?,
    };
    Ok((cond, p))
}

/// Flattened relative transforms from `p_now` to each future pose, in
/// query order; empty slots hold zeros.
pub fn transform_tokens(layout: &TokenLayout, p_now: &WholeBodyPose<f64>, future: &[WholeBodyPose<f64>]) -> Result<Vec<f64>> {
    if future.len() != layout.horizon {
        return Err(Error::DimensionMismatch { expected: layout.horizon, got: future.len() });
    }
    let t = relative_transforms(p_now, future)?;
    let slots = layout.link_slots(p_now.len() - 1)?;
    let mut out = vec![0.0; layout.query_len()];
    for (h, step) in t.0.iter().enumerate() {
        for (pose, &s) in step.iter().zip(&slots) {
            let i = 9 * (h * layout.d_tok + s);
            out[i..i + 9].copy_from_slice(&pose.to_9d().to_array());
        }
    }
    Ok(out)
}

/// Per-entry availability of a flattened query block.
pub fn query_entry_mask(layout: &TokenLayout, available: &[bool]) -> Vec<bool> {
    (0..layout.query_count()).flat_map(|t| [available[t % layout.d_tok]; 9]).collect()
}

pub fn token(flat: &[f64], index: usize) -> Result<Pose9D<f64>> {
    Pose9D::from_slice(&flat[9 * index..9 * index + 9])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_count() {
        assert_eq!(TokenLayout::default().total(), 137);
        for d in 1..10 {
            for h in 0..20 {
                let l = TokenLayout { d_tok: d, horizon: h };
                assert_eq!(l.total(), l.condition_count() + l.query_count());
            }
        }
    }

    #[test]
    fn decode_inverts_indexing() {
        let l = TokenLayout::default();
        assert_eq!(l.decode(l.goal()), Token::Goal);
        for link in 0..8 {
            assert_eq!(l.decode(l.observation(link)), Token::Observation { link });
            for step in 0..16 {
                assert_eq!(l.decode(l.query(step, link)), Token::Query { step, link });
            }
        }
    }

    #[test]
    fn worked_example_row() {
        let l = TokenLayout::default();
        let m = build_masks(7, 8, 16).unwrap();
        let row = l.query(5, 3);
        let allowed: Vec<usize> = (0..l.total()).filter(|&c| m.get(row, c)).collect();
        let mut expected: Vec<usize> = (0..9).collect();
        expected.extend((0..=3).map(|a| l.query(5, a)));
        expected.push(l.query(4, 3));
        expected.sort_unstable();
        assert_eq!(allowed, expected);
    }

    #[test]
    fn six_dof_masks_slot_six() {
        let l = TokenLayout::default();
        let m = build_masks(6, 8, 16).unwrap();
        for r in 0..l.total() {
            assert!(!m.get(r, l.observation(6)));
            for h in 0..16 {
                assert!(!m.get(r, l.query(h, 6)));
            }
        }
        assert!(build_masks(8, 8, 16).is_err());
        assert!(build_masks(0, 8, 16).is_err());
    }

    #[test]
    fn lpe_properties() {
        let e = sinusoidal_lpe(8, 16).unwrap();
        assert!(e.iter().flatten().all(|v| v.abs() <= 1.0));
        for a in 0..8 {
            for b in a + 1..8 {
                assert_ne!(e[a], e[b]);
            }
        }
        assert!(sinusoidal_lpe(8, 3).is_err());
    }
}

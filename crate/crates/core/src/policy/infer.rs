//! Reverse diffusion from Gaussian noise to joint trajectories.

use rand::Rng;

use super::denoiser::Denoiser;
use super::schedule::DiffusionSchedule;
use super::tokens::{make_condition, query_entry_mask, token, Condition, TokenLayout};
use super::train::standard_normal;
use crate::error::Result;
use crate::kinematics::WholeBodyPose;
use crate::optimize::{whole_body_ik, WholeBodyIkOptions};
use crate::robot::FrameAssignment;
use crate::se3::from_9d;
use crate::{JointConfig, Pose, RobotModel};

fn apply_mask(x: &mut [f64], mask: &[bool]) {
    for (v, m) in x.iter_mut().zip(mask) {
        if !m {
            *v = 0.0;
        }
    }
}

/// Deterministic DDIM sweep from a fresh Gaussian block.
pub fn denoise<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    layout: &TokenLayout,
    schedule: &DiffusionSchedule,
    denoiser: &D,
    condition: &Condition,
    rng: &mut R,
) -> Vec<f64> {
    let mask = query_entry_mask(layout, &condition.available);
    let mut x = standard_normal(layout.query_len(), rng);
    apply_mask(&mut x, &mask);
    for (tau, prev) in schedule.inference_pairs() {
        let eps = denoiser.predict(&x, condition, tau);
        x = schedule.ddim_step(&x, &eps, tau, prev);
        apply_mask(&mut x, &mask);
    }
    x
}

/// Whole-body poses `T·p_t` per horizon step; `None` where some token is
/// not a usable rotation.
pub fn decode_poses(layout: &TokenLayout, p_t: &WholeBodyPose<f64>, block: &[f64]) -> Result<Vec<Option<WholeBodyPose<f64>>>> {
    let slots = layout.link_slots(p_t.len() - 1)?;
    Ok((0..layout.horizon)
        .map(|h| {
            slots
                .iter()
                .zip(&p_t.0)
                .map(|(&s, p)| {
                    let t: Pose = from_9d(&token(block, h * layout.d_tok + s).ok()?).ok()?;
                    Some(t.compose(p))
                })
                .collect::<Option<Vec<_>>>()
                .map(WholeBodyPose)
        })
        .collect())
}

/// Whole-body IK of every decoded step from `j_t`. The first failure and
/// every later step are `None`; a chunk is only usable up to its first gap.
pub fn solve_steps<R: Rng + ?Sized>(
    robot: &RobotModel,
    frames: &FrameAssignment,
    j_t: &[f64],
    poses: &[Option<WholeBodyPose<f64>>],
    ik: &WholeBodyIkOptions,
    rng: &mut R,
) -> Vec<Option<JointConfig>> {
    let mut failed = false;
    poses
        .iter()
        .map(|p| {
            if failed {
                return None;
            }
            let q = p.as_ref().and_then(|t| whole_body_ik(robot, frames, t, j_t, ik, rng).ok()).map(|s| s.joints);
            failed = q.is_none();
            q
        })
        .collect()
}

/// Samples one `H`-step joint trajectory towards `goal`.
#[allow(clippy::too_many_arguments)]
pub fn infer<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    layout: &TokenLayout,
    robot: &RobotModel,
    frames: &FrameAssignment,
    j_t: &[f64],
    goal: &Pose,
    denoiser: &D,
    schedule: &DiffusionSchedule,
    ik: &WholeBodyIkOptions,
    rng: &mut R,
) -> Result<Vec<Option<JointConfig>>> {
    let (condition, p_t) = make_condition(layout, robot, frames, j_t, goal)?;
    let block = denoise(layout, schedule, denoiser, &condition, rng);
    let poses = decode_poses(layout, &p_t, &block)?;
    Ok(solve_steps(robot, frames, j_t, &poses, ik, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{end_effector_pose, forward_kinematics};
    use crate::policy::denoiser::{identity_denoiser, ScriptedDenoiser, ZeroDenoiser};
    use crate::policy::tokens::transform_tokens;
    use crate::robot::{compile_robot, sample_frames, Family};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn oracle_noise_reconstructs_the_clean_block() {
        let s = DiffusionSchedule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a0 = standard_normal(64, &mut rng);
            let eps = standard_normal(64, &mut rng);
            let k = *s.inference_steps.first().unwrap();
            let mut x = s.add_noise(&a0, &eps, k);
            for (tau, prev) in s.inference_pairs() {
                // exact noise of the current iterate with respect to a0
                let e = s.noise_towards(&x, &a0, tau);
                x = s.ddim_step(&x, &e, tau, prev);
            }
            assert!(x.iter().zip(&a0).all(|(a, b)| (a - b).abs() < 1e-9));
        }
    }

    #[test]
    fn identity_script_holds_still() {
        let (l, s) = (TokenLayout::default(), DiffusionSchedule::default());
        let robot: RobotModel = compile_robot(&Family::Sawyer7.nominal()).unwrap();
        let frames = sample_frames(&robot, 9);
        let q = vec![0.3, -0.2, 0.5, 0.9, -0.4, 0.6, 0.1];
        let goal = end_effector_pose(&robot, &robot.lower()).unwrap();
        let d = identity_denoiser(s.clone(), l);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = infer(&l, &robot, &frames, &q, &goal, &d, &s, &WholeBodyIkOptions::default(), &mut rng).unwrap();
        assert_eq!(out.len(), 16);
        for step in out {
            let j = step.unwrap();
            assert!(j.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-6));
        }
    }

    #[test]
    fn scripted_transforms_recover_a_known_chunk() {
        let (l, s) = (TokenLayout::default(), DiffusionSchedule::default());
        let robot: RobotModel = compile_robot(&Family::Ur6.nominal()).unwrap();
        let frames = sample_frames(&robot, 4);
        let q0 = vec![0.2, -0.8, 1.1, -0.3, 0.6, 0.2];
        let chunk: Vec<Vec<f64>> =
            (1..=16).map(|h| q0.iter().enumerate().map(|(i, v)| v + 0.02 * h as f64 * (1.0 + i as f64 * 0.1)).collect()).collect();
        let p0 = forward_kinematics(&robot, &frames, &q0).unwrap();
        let future: Vec<_> = chunk.iter().map(|q| forward_kinematics(&robot, &frames, q).unwrap()).collect();
        let block = transform_tokens(&l, &p0, &future).unwrap();
        let d = ScriptedDenoiser::new(s.clone(), move |_: &Condition| block.clone());
        let goal = end_effector_pose(&robot, &chunk[15]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = infer(&l, &robot, &frames, &q0, &goal, &d, &s, &WholeBodyIkOptions::default(), &mut rng).unwrap();
        for (got, want) in out.iter().zip(&chunk) {
            let got = got.as_ref().expect("IK step");
            assert!(got.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-2), "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn independent_noise_gives_distinct_samples() {
        let (l, s) = (TokenLayout::default(), DiffusionSchedule::default());
        let robot: RobotModel = compile_robot(&Family::Ur6.nominal()).unwrap();
        let frames = sample_frames(&robot, 4);
        let (cond, _) =
            make_condition(&l, &robot, &frames, &[0.0; 6], &end_effector_pose(&robot, &[0.1; 6]).unwrap()).unwrap();
        let blocks: Vec<Vec<f64>> = (0..4)
            .map(|i| denoise(&l, &s, &ZeroDenoiser, &cond, &mut ChaCha8Rng::seed_from_u64(i)))
            .collect();
        assert!(blocks.windows(2).any(|w| w[0] != w[1]));
    }
}

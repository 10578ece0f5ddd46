//! Training-sample construction, masked noise-prediction loss and EMA.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::denoiser::Denoiser;
use super::schedule::DiffusionSchedule;
use super::tokens::{make_condition, query_entry_mask, transform_tokens, Condition, TokenLayout};
use crate::collision::perturb;
use crate::error::{Error, Result};
use crate::kinematics::forward_kinematics;
use crate::planner::DemoRecord;
use crate::robot::sample_frames_with;
use crate::RobotModel;

/// Joint-space observation noise in radians.
pub const OBSERVATION_NOISE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Augmentation {
    pub observation_noise: f64,
    /// Draw a random frame assignment per sample instead of the recorded one.
    pub randomize_frames: bool,
}

impl Default for Augmentation {
    fn default() -> Self {
        Self { observation_noise: OBSERVATION_NOISE, randomize_frames: true }
    }
}

/// A demonstration with its compiled robot.
#[derive(Clone, Debug)]
pub struct DemoSource {
    pub robot: RobotModel,
    pub record: DemoRecord,
}

impl DemoSource {
    pub fn new(record: DemoRecord) -> Result<Self> {
        Ok(Self { robot: record.robot()?, record })
    }
}

/// One corrupted training example.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub condition: Condition,
    pub clean: Vec<f64>,
    pub noise: Vec<f64>,
    pub noisy: Vec<f64>,
    pub tau: usize,
    /// Entries that count towards the loss.
    pub entry_mask: Vec<bool>,
}

impl TrainingSample {
    pub fn active_entries(&self) -> usize {
        self.entry_mask.iter().filter(|m| **m).count()
    }
}

pub fn standard_normal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Draws a time index, noisy observation, frame assignment, diffusion step
/// and noise for `source`. Future waypoints past the end repeat the last one.
pub fn prepare_sample<R: Rng + ?Sized>(
    layout: &TokenLayout,
    schedule: &DiffusionSchedule,
    source: &DemoSource,
    aug: &Augmentation,
    rng: &mut R,
) -> Result<TrainingSample> {
    if source.record.waypoints.len() < 2 {
        return Err(short(source));
    }
    let t = rng.random_range(0..source.record.waypoints.len());
    prepare_sample_at(layout, schedule, source, t, aug, rng)
}

fn short(source: &DemoSource) -> Error {
    Error::InvalidArgument(format!("demonstration has {} waypoints, need at least 2", source.record.waypoints.len()))
}

/// [`prepare_sample`] at a fixed time index `t`.
pub fn prepare_sample_at<R: Rng + ?Sized>(
    layout: &TokenLayout,
    schedule: &DiffusionSchedule,
    source: &DemoSource,
    t: usize,
    aug: &Augmentation,
    rng: &mut R,
) -> Result<TrainingSample> {
    let (robot, record) = (&source.robot, &source.record);
    let wp = &record.waypoints;
    if wp.len() < 2 {
        return Err(short(source));
    }
    if t >= wp.len() {
        return Err(Error::InvalidArgument(format!("time index {t} past the end of {} waypoints", wp.len())));
    }
    let frames = if aug.randomize_frames { sample_frames_with(robot, rng) } else { record.frames.clone() };
    let observed = perturb(robot, &wp[t], aug.observation_noise, rng);
    let (condition, p_t) = make_condition(layout, robot, &frames, &observed, &record.goal_ee()?)?;
    let future = (1..=layout.horizon)
        .map(|h| forward_kinematics(robot, &frames, &wp[(t + h).min(wp.len() - 1)]))
        .collect::<Result<Vec<_>>>()?;
    let clean = transform_tokens(layout, &p_t, &future)?;
    let entry_mask = query_entry_mask(layout, &condition.available);
    let tau = rng.random_range(0..schedule.k_train);
    let mut noise = standard_normal(clean.len(), rng);
    for (e, m) in noise.iter_mut().zip(&entry_mask) {
        if !m {
            *e = 0.0;
        }
    }
    let noisy = schedule.add_noise(&clean, &noise, tau);
    Ok(TrainingSample { condition, clean, noise, noisy, tau, entry_mask })
}

/// Mean squared error between `prediction` and the true noise over the
/// unmasked entries.
pub fn masked_mse(prediction: &[f64], sample: &TrainingSample) -> f64 {
    let n = sample.active_entries();
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = prediction
        .iter()
        .zip(&sample.noise)
        .zip(&sample.entry_mask)
        .filter(|(_, m)| **m)
        .map(|((p, e), _)| (p - e).powi(2))
        .sum();
    sum / n as f64
}

pub fn sample_loss<D: Denoiser + ?Sized>(denoiser: &D, sample: &TrainingSample) -> f64 {
    masked_mse(&denoiser.predict(&sample.noisy, &sample.condition, sample.tau), sample)
}

/// Builds one sample and either updates a trainable denoiser on it or just
/// evaluates the loss.
pub fn train_step<D: Denoiser, R: Rng + ?Sized>(
    denoiser: &mut D,
    layout: &TokenLayout,
    schedule: &DiffusionSchedule,
    source: &DemoSource,
    aug: &Augmentation,
    rng: &mut R,
) -> Result<f64> {
    let s = prepare_sample(layout, schedule, source, aug, rng)?;
    match denoiser.update(std::slice::from_ref(&s)) {
        Some(loss) => Ok(loss),
        None => Ok(sample_loss(denoiser, &s)),
    }
}

/// `shadow ← decay·shadow + (1 − decay)·params`.
pub fn ema_update(params: &[f64], shadow: &mut [f64], decay: f64) {
    for (s, p) in shadow.iter_mut().zip(params) {
        *s = decay * *s + (1.0 - decay) * p;
    }
}

/// Decay used at optimizer step `step`: ramps up so early shadows are not
/// dominated by the initialization.
pub fn ema_decay(step: usize, decay: f64) -> f64 {
    decay.min((1.0 + step as f64) / (10.0 + step as f64))
}

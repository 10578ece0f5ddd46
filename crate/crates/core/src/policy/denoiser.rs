//! The noise-prediction interface and the non-learned denoisers used to
//! exercise the pipeline.

use super::schedule::DiffusionSchedule;
use super::tokens::{Condition, TokenLayout, IDENTITY_9D};
use super::train::TrainingSample;

/// Predicts the noise `ε̂` in a noisy query block, same shape as the input.
pub trait Denoiser: Sync {
    fn predict(&self, noisy: &[f64], condition: &Condition, tau: usize) -> Vec<f64>;

    /// One parameter update on `batch`; returns the batch loss before the
    /// update, or `None` for denoisers without parameters.
    fn update(&mut self, _batch: &[TrainingSample]) -> Option<f64> {
        None
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict(&self, noisy: &[f64], condition: &Condition, tau: usize) -> Vec<f64> {
        (**self).predict(noisy, condition, tau)
    }
}

/// Always predicts zero noise.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroDenoiser;

impl Denoiser for ZeroDenoiser {
    fn predict(&self, noisy: &[f64], _: &Condition, _: usize) -> Vec<f64> {
        vec![0.0; noisy.len()]
    }
}

/// Returns a fixed noise vector, typically the exact one used to corrupt a
/// training sample.
#[derive(Clone, Debug)]
pub struct OracleDenoiser(pub Vec<f64>);

impl Denoiser for OracleDenoiser {
    fn predict(&self, _: &[f64], _: &Condition, _: usize) -> Vec<f64> {
        self.0.clone()
    }
}

/// Predicts whatever noise makes the sample denoise to the clean block the
/// target function picks for the condition.
pub struct ScriptedDenoiser<F> {
    schedule: DiffusionSchedule,
    target: F,
}

impl<F: Fn(&Condition) -> Vec<f64> + Sync> ScriptedDenoiser<F> {
    pub fn new(schedule: DiffusionSchedule, target: F) -> Self {
        Self { schedule, target }
    }
}

/// Scripted denoiser that always asks for identity transforms.
pub fn identity_denoiser(
    schedule: DiffusionSchedule,
    layout: TokenLayout,
) -> ScriptedDenoiser<impl Fn(&Condition) -> Vec<f64> + Sync> {
    let block: Vec<f64> = (0..layout.query_count()).flat_map(|_| IDENTITY_9D).collect();
    ScriptedDenoiser::new(schedule, move |_: &Condition| block.clone())
}

impl<F: Fn(&Condition) -> Vec<f64> + Sync> Denoiser for ScriptedDenoiser<F> {
    fn predict(&self, noisy: &[f64], condition: &Condition, tau: usize) -> Vec<f64> {
        self.schedule.noise_towards(noisy, &(self.target)(condition), tau)
    }
}

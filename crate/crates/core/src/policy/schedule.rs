//! Squared-cosine noise schedule and deterministic DDIM updates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const COSINE_OFFSET: f64 = 0.008;
const MAX_BETA: f64 = 0.999;

/// Cumulative signal coefficients `ᾱ_τ`, `τ = 0..k`, of the squared-cosine
/// schedule with per-step betas capped at 0.999.
pub fn schedule_alphas(k: usize) -> Vec<f64> {
    let f = |t: f64| (((t / k as f64) + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * std::f64::consts::FRAC_PI_2).cos().powi(2);
    let mut acc = 1.0;
    (0..k)
        .map(|i| {
            let beta = (1.0 - f(i as f64 + 1.0) / f(i as f64)).min(MAX_BETA);
            acc *= 1.0 - beta;
            acc
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    pub k_train: usize,
    pub alpha_bars: Vec<f64>,
    /// Descending training steps visited at inference.
    pub inference_steps: Vec<usize>,
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        Self::new(100, 10).expect("default schedule")
    }
}

impl DiffusionSchedule {
    /// `k_infer` evenly strided steps of a `k_train`-step schedule,
    /// e.g. `[90, 80, …, 0]` for 100 and 10.
    pub fn new(k_train: usize, k_infer: usize) -> Result<Self> {
        if k_train == 0 || k_infer == 0 || k_infer > k_train {
            return Err(Error::InvalidArgument(format!("bad schedule sizes {k_train}/{k_infer}")));
        }
        let stride = k_train / k_infer;
        let inference_steps = (0..k_infer).rev().map(|i| i * stride).collect();
        Ok(Self { k_train, alpha_bars: schedule_alphas(k_train), inference_steps })
    }

    /// `ᾱ` before step 0 is taken as 1.
    fn alpha_bar(&self, tau: Option<usize>) -> f64 {
        tau.map_or(1.0, |t| self.alpha_bars[t])
    }

    /// `a^τ = √ᾱ_τ·a0 + √(1−ᾱ_τ)·ε`.
    pub fn add_noise(&self, a0: &[f64], eps: &[f64], tau: usize) -> Vec<f64> {
        let ab = self.alpha_bars[tau];
        let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
        a0.iter().zip(eps).map(|(a, e)| s * a + n * e).collect()
    }

    /// Deterministic DDIM update from `tau` to `prev` (`None` is the clean end).
    pub fn ddim_step(&self, x: &[f64], eps_hat: &[f64], tau: usize, prev: Option<usize>) -> Vec<f64> {
        let ab = self.alpha_bars[tau];
        let ab_prev = self.alpha_bar(prev);
        let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
        let (sp, np) = (ab_prev.sqrt(), (1.0 - ab_prev).sqrt());
        x.iter()
            .zip(eps_hat)
            .map(|(x, e)| {
                let x0 = (x - n * e) / s;
                sp * x0 + np * e
            })
            .collect()
    }

    /// `(τ, τ_prev)` pairs of the inference sweep.
    pub fn inference_pairs(&self) -> impl Iterator<Item = (usize, Option<usize>)> + '_ {
        self.inference_steps.iter().enumerate().map(|(i, &t)| (t, self.inference_steps.get(i + 1).copied()))
    }

    /// Noise that makes the sample at `tau` denoise to exactly `target`.
    pub fn noise_towards(&self, x: &[f64], target: &[f64], tau: usize) -> Vec<f64> {
        let ab = self.alpha_bars[tau];
        let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
        x.iter().zip(target).map(|(x, a)| (x - s * a) / n).collect()
    }
}

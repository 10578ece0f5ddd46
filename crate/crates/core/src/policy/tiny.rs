//! A small trainable denoiser: token embeddings feeding a two-hidden-layer
//! perceptron, with hand-written backpropagation and Adam.
//!
//! The noise block is far wider than the hidden layers, so the output also
//! gets a learned per-step multiple of the noisy input; the perceptron only
//! has to supply the residual.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::denoiser::Denoiser;
use super::schedule::DiffusionSchedule;
use super::tokens::{sinusoidal_lpe, Condition, Token, TokenLayout};
use super::train::{ema_decay, ema_update, prepare_sample_at, Augmentation, DemoSource, TrainingSample};
use crate::dataset::{derive_seed, DatasetHeader};
use crate::error::{Error, Result};
use crate::planner::DemoRecord;
use crate::se3::{from_9d, Pose9D};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_KIND: &str = "checkpoint";
/// Rows of the step-embedding table.
pub const MAX_DIFFUSION_STEPS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TinyConfig {
    /// Width of each token embedding.
    pub embed_dim: usize,
    pub hidden: usize,
    /// Width of the sinusoidal diffusion-step embedding.
    pub step_dim: usize,
    /// Also feed the goal expressed in each observed link's frame. The
    /// targets are relative transforms, so this hands the network the
    /// quantity it would otherwise have to build from world-frame products.
    pub goal_features: bool,
}

impl Default for TinyConfig {
    fn default() -> Self {
        Self { embed_dim: 16, hidden: 256, step_dim: 32, goal_features: true }
    }
}

#[derive(Clone, Copy, Debug)]
struct Offsets {
    we: usize,
    be: usize,
    hpe: usize,
    cpe: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    /// Per-step gain of the direct path from the noisy input to the output.
    skip: usize,
    /// Per-step gain on the MLP output.
    gain: usize,
    /// Per-step gain on the projected values of query tokens.
    qin: usize,
    total: usize,
    input: usize,
    output: usize,
}

impl Offsets {
    fn new(layout: &TokenLayout, c: &TinyConfig) -> Self {
        let e = c.embed_dim;
        let input = layout.total() * e + c.step_dim + if c.goal_features { 9 * layout.d_tok } else { 0 };
        let output = layout.query_len();
        let mut at = 0;
        let mut take = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let we = take(e * 9);
        let be = take(e);
        let hpe = take(layout.horizon * e);
        let cpe = take(2 * e);
        let w1 = take(c.hidden * input);
        let b1 = take(c.hidden);
        let w2 = take(c.hidden * c.hidden);
        let b2 = take(c.hidden);
        let w3 = take(output * c.hidden);
        let b3 = take(output);
        let skip = take(MAX_DIFFUSION_STEPS);
        let gain = take(MAX_DIFFUSION_STEPS);
        let qin = take(MAX_DIFFUSION_STEPS);
        Self { we, be, hpe, cpe, w1, b1, w2, b2, w3, b3, skip, gain, qin, total: at, input, output }
    }
}

/// Which learned table a token adds besides the fixed link embedding.
#[derive(Clone, Copy, Debug)]
enum Extra {
    Condition(usize),
    Horizon(usize),
}

#[derive(Clone, Debug)]
struct TokenInfo {
    link: Option<usize>,
    extra: Extra,
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        if self.m.len() != params.len() {
            self.m = vec![0.0; params.len()];
            self.v = vec![0.0; params.len()];
        }
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

#[derive(Clone, Debug)]
pub struct TinyDenoiser {
    layout: TokenLayout,
    config: TinyConfig,
    off: Offsets,
    tokens: Vec<TokenInfo>,
    lpe: Vec<Vec<f64>>,
    step_table: Vec<Vec<f64>>,
    params: Vec<f64>,
    adam: Adam,
    /// Per-step multiplier on the sample loss; empty means all ones.
    loss_weights: Vec<f64>,
    pub learning_rate: f64,
}

struct Cache {
    values: Vec<Vec<[f64; 9]>>,
    active: Vec<Vec<bool>>,
    taus: Vec<usize>,
    noisy: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    a1: Vec<Vec<f64>>,
    h1: Vec<Vec<f64>>,
    a2: Vec<Vec<f64>>,
    h2: Vec<Vec<f64>>,
    mlp: Vec<Vec<f64>>,
    out: Vec<Vec<f64>>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_derivative(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += alpha * x;
    }
}

/// `W x + b` for every `x`, with a row-major `W` of `b.len()` rows. Rows
/// are the outer loop so each stays in cache across the batch.
fn affine(w: &[f64], b: &[f64], xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![b.to_vec(); xs.len()];
    let Some(n) = xs.first().map(Vec::len) else { return out };
    for (r, row) in w.chunks_exact(n).enumerate() {
        for (o, x) in out.iter_mut().zip(xs) {
            o[r] += dot(row, x);
        }
    }
    out
}

/// Accumulates weight and bias gradients of [`affine`] and returns the
/// input gradients.
fn affine_backward(w: &[f64], xs: &[Vec<f64>], d: &[Vec<f64>], gw: &mut [f64], gb: &mut [f64]) -> Vec<Vec<f64>> {
    let n = xs[0].len();
    let mut dx = vec![vec![0.0; n]; xs.len()];
    for (r, (row, grow)) in w.chunks_exact(n).zip(gw.chunks_exact_mut(n)).enumerate() {
        for ((x, ds), dxs) in xs.iter().zip(d).zip(dx.iter_mut()) {
            let g = ds[r];
            if g == 0.0 {
                continue;
            }
            axpy(g, x, grow);
            gb[r] += g;
            axpy(g, row, dxs);
        }
    }
    dx
}

/// `T_link⁻¹ · T_goal` per observed link slot; zeros where a slot is empty
/// or a token is not a valid pose.
fn goal_in_link_frames(cond: &Condition) -> Vec<f64> {
    let goal = from_9d(&Pose9D::from_array(cond.goal));
    cond.observation
        .iter()
        .zip(&cond.available)
        .flat_map(|(t, on)| {
            let rel = match (on, &goal) {
                (true, Ok(g)) => from_9d(&Pose9D::from_array(*t)).ok().map(|l| l.inverse().compose(g).to_9d().to_array()),
                _ => None,
            };
            rel.unwrap_or([0.0; 9])
        })
        .collect()
}

impl TinyDenoiser {
    pub fn new(layout: TokenLayout, config: TinyConfig, seed: u64) -> Result<Self> {
        let mut d = Self::empty(layout, config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let o = d.off;
        let mut fill = |p: &mut [f64], std: f64| {
            let n = Normal::new(0.0, std).expect("positive std");
            p.iter_mut().for_each(|v| *v = n.sample(&mut rng));
        };
        let (e, h) = (d.config.embed_dim, d.config.hidden);
        fill(&mut d.params[o.we..o.be], 1.0 / 3.0);
        fill(&mut d.params[o.hpe..o.w1], 0.02);
        fill(&mut d.params[o.w1..o.b1], 1.0 / (o.input as f64).sqrt());
        fill(&mut d.params[o.w2..o.b2], 1.0 / (h as f64).sqrt());
        fill(&mut d.params[o.w3..o.b3], 0.1 / (h as f64).sqrt());
        d.params[o.gain..o.gain + MAX_DIFFUSION_STEPS].fill(1.0);
        d.params[o.qin..o.qin + MAX_DIFFUSION_STEPS].fill(1.0);
        debug_assert_eq!(o.cpe + 2 * e, o.w1);
        Ok(d)
    }

    fn empty(layout: TokenLayout, config: TinyConfig) -> Result<Self> {
        if config.hidden == 0 || config.embed_dim == 0 {
            return Err(Error::InvalidArgument("denoiser widths must be positive".into()));
        }
        let off = Offsets::new(&layout, &config);
        let tokens = (0..layout.total())
            .map(|i| match layout.decode(i) {
                Token::Observation { link } => TokenInfo { link: Some(link), extra: Extra::Condition(0) },
                Token::Goal => TokenInfo { link: None, extra: Extra::Condition(1) },
                Token::Query { step, link } => TokenInfo { link: Some(link), extra: Extra::Horizon(step) },
            })
            .collect();
        Ok(Self {
            lpe: sinusoidal_lpe(layout.d_tok, config.embed_dim)?,
            step_table: sinusoidal_lpe(MAX_DIFFUSION_STEPS, config.step_dim)?,
            layout,
            config,
            off,
            tokens,
            params: vec![0.0; off.total],
            adam: Adam::default(),
            loss_weights: Vec::new(),
            learning_rate: 1e-3,
        })
    }

    pub fn from_params(layout: TokenLayout, config: TinyConfig, params: Vec<f64>) -> Result<Self> {
        let mut d = Self::empty(layout, config)?;
        if params.len() != d.off.total {
            return Err(Error::DimensionMismatch { expected: d.off.total, got: params.len() });
        }
        d.params = params;
        Ok(d)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.off.total
    }

    /// Sets the per-step gains so the MLP output reads as a clean-sample
    /// estimate, `ε̂ = (x − √ᾱ·m) / √(1−ᾱ)`, and the noisy query values
    /// start switched off, leaving a plain regression from the condition.
    /// All gains stay trainable.
    pub fn set_clean_gains(&mut self, schedule: &DiffusionSchedule) -> Result<()> {
        if schedule.k_train > MAX_DIFFUSION_STEPS {
            return Err(Error::InvalidArgument(format!("at most {MAX_DIFFUSION_STEPS} diffusion steps")));
        }
        for (t, ab) in schedule.alpha_bars.iter().enumerate() {
            let n = (1.0 - ab).sqrt();
            self.params[self.off.skip + t] = 1.0 / n;
            self.params[self.off.gain + t] = -ab.sqrt() / n;
            self.params[self.off.qin + t] = 0.0;
        }
        Ok(())
    }

    /// Weights each sample's noise loss by `min(SNR, γ) / SNR`, so that in
    /// clean-sample terms the error is weighted by `min(SNR, γ)` instead of
    /// the raw SNR. Without this the few lowest steps dominate every batch.
    pub fn set_min_snr_weights(&mut self, schedule: &DiffusionSchedule, gamma: f64) -> Result<()> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidArgument("min-SNR gamma must be positive".into()));
        }
        self.loss_weights = schedule
            .alpha_bars
            .iter()
            .map(|ab| {
                let snr = ab / (1.0 - ab);
                snr.min(gamma) / snr
            })
            .collect();
        Ok(())
    }

    fn loss_weight(&self, tau: usize) -> f64 {
        self.loss_weights.get(tau).copied().unwrap_or(1.0)
    }

    pub fn layout(&self) -> TokenLayout {
        self.layout
    }

    pub fn config(&self) -> &TinyConfig {
        &self.config
    }

    fn embed(&self, noisy: &[f64], cond: &Condition, tau: usize) -> (Vec<[f64; 9]>, Vec<bool>, Vec<f64>) {
        let (o, e, p) = (self.off, self.config.embed_dim, &self.params);
        let nc = self.layout.condition_count();
        let flat = cond.flat();
        let mut values = Vec::with_capacity(self.tokens.len());
        let mut active = Vec::with_capacity(self.tokens.len());
        let mut z = vec![0.0; o.input];
        for (i, info) in self.tokens.iter().enumerate() {
            let src = if i < nc { &flat[9 * i..9 * i + 9] } else { &noisy[9 * (i - nc)..9 * (i - nc) + 9] };
            let v: [f64; 9] = src.try_into().expect("9D token");
            let on = info.link.is_none_or(|l| cond.available[l]);
            values.push(v);
            active.push(on);
            if !on {
                continue;
            }
            let scale = if i < nc { 1.0 } else { p[o.qin + tau] };
            let zi = &mut z[i * e..(i + 1) * e];
            for (k, zk) in zi.iter_mut().enumerate() {
                *zk = p[o.be + k] + scale * dot(&p[o.we + 9 * k..o.we + 9 * k + 9], &v);
            }
            if let Some(l) = info.link {
                axpy(1.0, &self.lpe[l], zi);
            }
            let extra = self.extra_offset(info.extra);
            axpy(1.0, &p[extra..extra + e], zi);
        }
        let at = self.tokens.len() * e;
        z[at..at + self.config.step_dim].copy_from_slice(&self.step_table[tau]);
        if self.config.goal_features {
            z[at + self.config.step_dim..].copy_from_slice(&goal_in_link_frames(cond));
        }
        (values, active, z)
    }

    fn extra_offset(&self, extra: Extra) -> usize {
        let e = self.config.embed_dim;
        match extra {
            Extra::Condition(k) => self.off.cpe + k * e,
            Extra::Horizon(k) => self.off.hpe + k * e,
        }
    }

    fn forward(&self, inputs: &[(&[f64], &Condition, usize)]) -> Cache {
        let (o, h, p) = (self.off, self.config.hidden, &self.params);
        let mut c = Cache {
            values: Vec::new(),
            active: Vec::new(),
            taus: Vec::new(),
            noisy: Vec::new(),
            z: Vec::new(),
            a1: Vec::new(),
            h1: Vec::new(),
            a2: Vec::new(),
            h2: Vec::new(),
            mlp: Vec::new(),
            out: Vec::new(),
        };
        for (noisy, cond, tau) in inputs {
            let (v, a, z) = self.embed(noisy, cond, *tau);
            c.values.push(v);
            c.active.push(a);
            c.z.push(z);
            c.taus.push(*tau);
            c.noisy.push(noisy.to_vec());
        }
        let act = |xs: &[Vec<f64>]| -> Vec<Vec<f64>> { xs.iter().map(|x| x.iter().map(|v| silu(*v)).collect()).collect() };
        c.a1 = affine(&p[o.w1..o.b1], &p[o.b1..o.b1 + h], &c.z);
        c.h1 = act(&c.a1);
        c.a2 = affine(&p[o.w2..o.b2], &p[o.b2..o.b2 + h], &c.h1);
        c.h2 = act(&c.a2);
        c.mlp = affine(&p[o.w3..o.b3], &p[o.b3..o.b3 + o.output], &c.h2);
        c.out = c
            .mlp
            .iter()
            .zip(&c.noisy)
            .zip(&c.taus)
            .map(|((m, x), tau)| m.iter().zip(x).map(|(m, x)| p[o.gain + tau] * m + p[o.skip + tau] * x).collect())
            .collect();
        c
    }

    /// Mean masked (and step-weighted) loss over `batch`; the gradient of that mean is added
    /// to `grad`.
    pub fn accumulate_gradient(&self, batch: &[TrainingSample], grad: &mut [f64]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        let inputs: Vec<_> = batch.iter().map(|s| (s.noisy.as_slice(), &s.condition, s.tau)).collect();
        let c = self.forward(&inputs);
        let (o, e, h, p) = (self.off, self.config.embed_dim, self.config.hidden, &self.params);
        let nb = batch.len() as f64;
        let mut loss = 0.0;
        let dout: Vec<Vec<f64>> = batch
            .iter()
            .zip(&c.out)
            .map(|(s, out)| {
                let n = s.active_entries().max(1) as f64 / self.loss_weight(s.tau);
                out.iter()
                    .zip(&s.noise)
                    .zip(&s.entry_mask)
                    .map(|((y, t), m)| {
                        if *m {
                            loss += (y - t).powi(2) / n;
                            2.0 * (y - t) / (n * nb)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let mut dmlp = Vec::with_capacity(dout.len());
        for (((d, x), m), tau) in dout.iter().zip(&c.noisy).zip(&c.mlp).zip(&c.taus) {
            grad[o.skip + tau] += dot(d, x);
            grad[o.gain + tau] += dot(d, m);
            dmlp.push(d.iter().map(|v| v * p[o.gain + tau]).collect::<Vec<_>>());
        }
        let (gw3, rest) = grad[o.w3..].split_at_mut(o.b3 - o.w3);
        let dh2 = affine_backward(&p[o.w3..o.b3], &c.h2, &dmlp, gw3, &mut rest[..o.output]);
        let da2: Vec<Vec<f64>> = dh2.iter().zip(&c.a2).map(|(g, a)| g.iter().zip(a).map(|(g, a)| g * silu_derivative(*a)).collect()).collect();
        let (gw2, rest) = grad[o.w2..].split_at_mut(o.b2 - o.w2);
        let dh1 = affine_backward(&p[o.w2..o.b2], &c.h1, &da2, gw2, &mut rest[..h]);
        let da1: Vec<Vec<f64>> = dh1.iter().zip(&c.a1).map(|(g, a)| g.iter().zip(a).map(|(g, a)| g * silu_derivative(*a)).collect()).collect();
        let (gw1, rest) = grad[o.w1..].split_at_mut(o.b1 - o.w1);
        let dz = affine_backward(&p[o.w1..o.b1], &c.z, &da1, gw1, &mut rest[..h]);
        let nc = self.layout.condition_count();
        for (((dz, values), active), tau) in dz.iter().zip(&c.values).zip(&c.active).zip(&c.taus) {
            for (i, info) in self.tokens.iter().enumerate() {
                if !active[i] {
                    continue;
                }
                let scale = if i < nc { 1.0 } else { p[o.qin + tau] };
                let dzi = &dz[i * e..(i + 1) * e];
                for (k, g) in dzi.iter().enumerate() {
                    let row = o.we + 9 * k..o.we + 9 * k + 9;
                    if i >= nc {
                        grad[o.qin + tau] += g * dot(&p[row.clone()], &values[i]);
                    }
                    axpy(g * scale, &values[i], &mut grad[row]);
                    grad[o.be + k] += g;
                }
                let extra = self.extra_offset(info.extra);
                axpy(1.0, dzi, &mut grad[extra..extra + e]);
            }
        }
        loss / nb
    }

    /// Masked loss of one sample; its gradient is added to `grad`.
    pub fn loss_and_gradient(&self, sample: &TrainingSample, grad: &mut [f64]) -> f64 {
        self.accumulate_gradient(std::slice::from_ref(sample), grad)
    }

    /// Mean loss and gradient over `batch`.
    pub fn batch_gradient(&self, batch: &[TrainingSample]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.off.total];
        let loss = self.accumulate_gradient(batch, &mut grad);
        (loss, grad)
    }
}

impl Denoiser for TinyDenoiser {
    fn predict(&self, noisy: &[f64], condition: &Condition, tau: usize) -> Vec<f64> {
        self.forward(&[(noisy, condition, tau)]).out.remove(0)
    }

    fn update(&mut self, batch: &[TrainingSample]) -> Option<f64> {
        if batch.is_empty() {
            return None;
        }
        let (loss, grad) = self.batch_gradient(batch);
        let lr = self.learning_rate;
        self.adam.step(&mut self.params, &grad, lr);
        Some(loss)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate reached at the last step of a cosine decay.
    pub final_learning_rate: f64,
    pub ema_decay: f64,
    pub layout: TokenLayout,
    pub tiny: TinyConfig,
    pub augmentation: Augmentation,
    pub k_train: usize,
    pub k_infer: usize,
    /// Caps the (demonstration, time index) windows visited per epoch.
    pub max_windows_per_epoch: Option<usize>,
    /// Start the per-step gains at the clean-sample reading instead of a
    /// plain noise-predicting MLP.
    pub clean_gains: bool,
    /// Caps the effective clean-sample weight of each step at this SNR.
    /// `None` keeps the plain noise loss.
    pub min_snr_gamma: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            final_learning_rate: 1e-5,
            ema_decay: 0.9999,
            layout: TokenLayout::default(),
            tiny: TinyConfig::default(),
            augmentation: Augmentation::default(),
            k_train: 100,
            k_infer: 10,
            max_windows_per_epoch: None,
            clean_gains: true,
            min_snr_gamma: Some(5.0),
        }
    }
}

/// Architecture, weights and EMA weights of a trained denoiser.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub layout: TokenLayout,
    pub tiny: TinyConfig,
    pub k_train: usize,
    pub k_infer: usize,
    pub seed: u64,
    pub params: Vec<f64>,
    pub ema: Vec<f64>,
    #[serde(default)]
    pub header: Option<DatasetHeader>,
}

impl Checkpoint {
    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        DiffusionSchedule::new(self.k_train, self.k_infer)
    }

    /// The denoiser with the EMA weights, or the raw ones.
    pub fn denoiser(&self, use_ema: bool) -> Result<TinyDenoiser> {
        let p = if use_ema { &self.ema } else { &self.params };
        TinyDenoiser::from_params(self.layout, self.tiny.clone(), p.clone())
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        Ok(serde_json::to_writer(w, self)?)
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let c: Self = serde_json::from_reader(r)?;
        if c.format_version != CHECKPOINT_VERSION {
            return Err(Error::InvalidArgument(format!("unsupported checkpoint version {}", c.format_version)));
        }
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Exponentially smoothed batch loss at the end of the epoch.
    pub ema_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub checkpoint: Checkpoint,
    /// Row 0 holds the loss of the first batch before any update.
    pub curve: Vec<LossPoint>,
}

impl TrainReport {
    pub fn initial_loss(&self) -> f64 {
        self.curve[0].mean_loss
    }

    pub fn final_smoothed_loss(&self) -> f64 {
        self.curve.last().expect("curve has the initial row").ema_loss
    }

    pub fn write_loss_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,mean_loss,ema_loss")?;
        for p in &self.curve {
            writeln!(w, "{},{},{}", p.epoch, p.mean_loss, p.ema_loss)?;
        }
        Ok(())
    }
}

const LOSS_SMOOTHING: f64 = 0.05;
const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const SAMPLE_STREAM: u64 = 3;

/// Trains a [`TinyDenoiser`]. An epoch visits every (demonstration, time
/// index) window once in shuffled order, each with fresh augmentation.
pub fn train_tiny(demos: &[DemoRecord], config: &TrainConfig, seed: u64) -> Result<TrainReport> {
    if demos.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    if config.k_train > MAX_DIFFUSION_STEPS {
        return Err(Error::InvalidArgument(format!("at most {MAX_DIFFUSION_STEPS} diffusion steps")));
    }
    let schedule = DiffusionSchedule::new(config.k_train, config.k_infer)?;
    let sources = demos.iter().cloned().map(DemoSource::new).collect::<Result<Vec<_>>>()?;
    let mut windows: Vec<(usize, usize)> = Vec::new();
    for (i, s) in sources.iter().enumerate() {
        if s.record.waypoints.len() < 2 {
            return Err(Error::InvalidArgument(format!("demonstration {i} has fewer than 2 waypoints")));
        }
        windows.extend((0..s.record.waypoints.len()).map(|t| (i, t)));
    }
    let mut model = TinyDenoiser::new(config.layout, config.tiny.clone(), derive_seed(seed, &[INIT_STREAM]))?;
    if config.clean_gains {
        model.set_clean_gains(&schedule)?;
    }
    if let Some(g) = config.min_snr_gamma {
        model.set_min_snr_weights(&schedule, g)?;
    }
    let mut ema = model.params.clone();
    let mut shuffle = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[SHUFFLE_STREAM]));
    let mut curve = Vec::with_capacity(config.epochs + 1);
    let mut smoothed: Option<f64> = None;
    let mut step = 0usize;
    let per_epoch = config.max_windows_per_epoch.map_or(windows.len(), |m| m.min(windows.len())).div_ceil(config.batch_size);
    let total_steps = (per_epoch * config.epochs).max(1);
    for epoch in 1..=config.epochs {
        windows.shuffle(&mut shuffle);
        let take = config.max_windows_per_epoch.map_or(windows.len(), |m| m.min(windows.len()));
        let (mut total, mut batches) = (0.0, 0usize);
        for (b, chunk) in windows[..take].chunks(config.batch_size).enumerate() {
            let batch = chunk
                .par_iter()
                .enumerate()
                .map(|(k, &(i, t))| {
                    let s = derive_seed(seed, &[SAMPLE_STREAM, epoch as u64, b as u64, k as u64]);
                    let mut rng = ChaCha8Rng::seed_from_u64(s);
                    prepare_sample_at(&config.layout, &schedule, &sources[i], t, &config.augmentation, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let progress = step as f64 / total_steps as f64;
            model.learning_rate = config.final_learning_rate
                + 0.5 * (config.learning_rate - config.final_learning_rate) * (1.0 + (std::f64::consts::PI * progress).cos());
            let loss = model.update(&batch).expect("non-empty batch");
            if curve.is_empty() {
                curve.push(LossPoint { epoch: 0, mean_loss: loss, ema_loss: loss });
            }
            ema_update(&model.params, &mut ema, ema_decay(step, config.ema_decay));
            step += 1;
            smoothed = Some(smoothed.map_or(loss, |s| (1.0 - LOSS_SMOOTHING) * s + LOSS_SMOOTHING * loss));
            total += loss;
            batches += 1;
        }
        let mean_loss = total / batches.max(1) as f64;
        log::info!("epoch {epoch}: mean loss {mean_loss:.5}");
        curve.push(LossPoint { epoch, mean_loss, ema_loss: smoothed.unwrap_or(mean_loss) });
    }
    if curve.is_empty() {
        return Err(Error::InvalidArgument("training ran no steps".into()));
    }
    let checkpoint = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        layout: config.layout,
        tiny: config.tiny.clone(),
        k_train: config.k_train,
        k_infer: config.k_infer,
        seed,
        params: model.params,
        ema,
        header: Some(DatasetHeader::new(CHECKPOINT_KIND, config, seed)?),
    };
    Ok(TrainReport { checkpoint, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::train::standard_normal;
    use rand::Rng;

    fn sample(layout: &TokenLayout, dof: usize, rng: &mut ChaCha8Rng) -> TrainingSample {
        let available = layout.availability(dof).unwrap();
        let condition = Condition {
            observation: (0..layout.d_tok).map(|_| standard_normal(9, rng).try_into().unwrap()).collect(),
            goal: standard_normal(9, rng).try_into().unwrap(),
            available: available.clone(),
        };
        let entry_mask = super::super::tokens::query_entry_mask(layout, &available);
        let mask = |v: Vec<f64>| v.into_iter().zip(&entry_mask).map(|(x, m)| if *m { x } else { 0.0 }).collect();
        let noise: Vec<f64> = mask(standard_normal(layout.query_len(), rng));
        let noisy: Vec<f64> = mask(standard_normal(layout.query_len(), rng));
        TrainingSample { condition, clean: noisy.clone(), noise, noisy, tau: rng.random_range(0..100), entry_mask }
    }

    #[test]
    fn masked_inputs_and_outputs_get_no_gradient() {
        let layout = TokenLayout::default();
        let d = TinyDenoiser::new(layout, TinyConfig { hidden: 16, ..TinyConfig::default() }, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample(&layout, 6, &mut rng);
        let mut g = vec![0.0; d.param_count()];
        d.loss_and_gradient(&s, &mut g);
        let o = d.off;
        let e = d.config.embed_dim;
        for h in 0..layout.horizon {
            // output rows of the masked slot
            for r in 9 * (h * 8 + 6)..9 * (h * 8 + 7) {
                assert_eq!(g[o.b3 + r], 0.0);
                assert!(g[o.w3 + r * 16..o.w3 + (r + 1) * 16].iter().all(|v| *v == 0.0));
            }
            // input columns of the masked slot
            let tok = layout.query(h, 6);
            for row in 0..16 {
                let base = o.w1 + row * o.input + tok * e;
                assert!(g[base..base + e].iter().all(|v| *v == 0.0));
            }
        }
        // perturbing a masked input changes nothing
        let mut s2 = s.clone();
        s2.noisy[9 * 6] = 5.0;
        s2.condition.observation[6] = [7.0; 9];
        assert_eq!(d.predict(&s.noisy, &s.condition, s.tau), d.predict(&s2.noisy, &s2.condition, s2.tau));
    }

    #[test]
    fn checkpoint_roundtrip_is_bitwise() {
        let demo = TinyDenoiser::new(TokenLayout::default(), TinyConfig { hidden: 8, ..TinyConfig::default() }, 5).unwrap();
        let c = Checkpoint {
            format_version: CHECKPOINT_VERSION,
            layout: demo.layout,
            tiny: demo.config.clone(),
            k_train: 100,
            k_infer: 10,
            seed: 5,
            params: demo.params.clone(),
            ema: demo.params.clone(),
            header: None,
        };
        let mut buf = Vec::new();
        c.write(&mut buf).unwrap();
        let back = Checkpoint::read(buf.as_slice()).unwrap();
        assert_eq!(back, c);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = sample(&demo.layout, 7, &mut rng);
        let d = back.denoiser(true).unwrap();
        assert_eq!(d.predict(&s.noisy, &s.condition, 3), demo.predict(&s.noisy, &s.condition, 3));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let layout = TokenLayout::default();
        let mut d = TinyDenoiser::new(layout, TinyConfig::default(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        // nonzero skip gains so their gradient is exercised too
        for t in 0..100 {
            d.params[d.off.skip + t] = rng.random_range(-0.5..0.5);
            d.params[d.off.gain + t] = rng.random_range(-2.0..2.0);
            d.params[d.off.qin + t] = rng.random_range(0.2..1.5);
        }
        let batch: Vec<_> = (0..3).map(|i| sample(&layout, 6 + i % 2, &mut rng)).collect();
        let (_, g) = d.batch_gradient(&batch);
        let o = d.off;
        let mut picks: Vec<usize> = vec![o.we + 3, o.be + 1, o.hpe + 5, o.cpe + 2, o.b1 + 7, o.b2 + 9, o.b3 + 11];
        picks.extend(batch.iter().flat_map(|s| [o.skip + s.tau, o.gain + s.tau, o.qin + s.tau]));
        while picks.len() < 20 {
            picks.push(rng.random_range(0..o.skip));
        }
        // fourth-order central stencil keeps truncation below round-off
        let h = 1e-4;
        for &i in &picks {
            let at = |k: f64| {
                let mut dp = d.clone();
                dp.params[i] += k * h;
                dp.batch_gradient(&batch).0
            };
            let fd = (at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-7);
            assert!(rel < 1e-4, "param {i}: analytic {} vs numeric {fd} (rel {rel:e})", g[i]);
        }
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert!(matches!(train_tiny(&[], &TrainConfig::default(), 0), Err(Error::EmptyDataset)));
    }
}

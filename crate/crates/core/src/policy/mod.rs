//! Diffusion-policy scaffold: pose-token layout, attention masks, noise
//! schedule, the training loss and reverse-diffusion inference, generic over
//! the denoiser.

mod denoiser;
mod infer;
mod schedule;
mod tiny;
mod tokens;
mod train;

pub use denoiser::{identity_denoiser, Denoiser, OracleDenoiser, ScriptedDenoiser, ZeroDenoiser};
pub use infer::{decode_poses, denoise, infer, solve_steps};
pub use schedule::{schedule_alphas, DiffusionSchedule};
pub use tiny::{train_tiny, Checkpoint, LossPoint, TinyConfig, TinyDenoiser, TrainConfig, TrainReport};
pub use tokens::{
    build_masks, make_condition, pose_tokens, query_entry_mask, sinusoidal_lpe, token, transform_tokens,
    AttentionMask, Condition, Token, TokenLayout, IDENTITY_9D,
};
pub use train::{
    ema_decay, ema_update, masked_mse, prepare_sample, prepare_sample_at, sample_loss, standard_normal, train_step, Augmentation,
    DemoSource, TrainingSample, OBSERVATION_NOISE,
};

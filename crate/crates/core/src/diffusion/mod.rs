//! Latent diffusion: cosine schedule, x0-predicting denoisers and a
//! skip-step ancestral sampler with classifier-free guidance.

mod condition;
mod denoiser;
mod sampler;
mod schedule;

pub use condition::{condition_bytes, parse_condition, read_condition, write_condition, Condition};
pub use denoiser::{
    denoiser_bytes, geometric_buckets, parse_denoiser, read_denoiser, ridge, train_denoiser, write_denoiser,
    AnalyticGaussian, Denoiser, DenoiserTraining, PerBucketLinear,
};
pub use sampler::{ddpm_step, guided_x0, sample, uniform_steps, SamplerConfig};
pub use schedule::{forward_noise, NoiseSchedule, COSINE_OFFSET};

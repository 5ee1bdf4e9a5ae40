use rand::Rng;
use rand_distr::StandardNormal;

use super::condition::Condition;
use super::denoiser::Denoiser;
use super::schedule::NoiseSchedule;
use crate::codec::{snap, Codebook, LatentGrid};
use crate::error::{Error, Result};
use crate::rng;

/// `x0_uncond + s_g·(x0_cond − x0_uncond)`; the endpoints 0 and 1 return
/// the corresponding input unchanged.
pub fn guided_x0(x0_uncond: &LatentGrid, x0_cond: &LatentGrid, s_g: f64) -> Result<LatentGrid> {
    x0_uncond.check_same_shape(x0_cond)?;
    if s_g == 1.0 {
        return Ok(x0_cond.clone());
    }
    if s_g == 0.0 {
        return Ok(x0_uncond.clone());
    }
    let v = x0_uncond
        .values()
        .iter()
        .zip(x0_cond.values())
        .map(|(u, c)| u + s_g * (c - u))
        .collect();
    LatentGrid::new(x0_uncond.side(), x0_uncond.dim(), v)
}

/// One ancestral step from `t` to `t_prev` through `q(Z_{t_prev} | Z_t, Ẑ0)`
/// with the skip-step coefficients
///
/// ```text
/// β   = 1 − ᾱ_t/ᾱ_prev
/// mean = √ᾱ_prev·β/(1 − ᾱ_t)·Ẑ0 + √(ᾱ_t/ᾱ_prev)·(1 − ᾱ_prev)/(1 − ᾱ_t)·Z_t
/// var  = β̃ = (1 − ᾱ_prev)/(1 − ᾱ_t)·β
/// ```
///
/// `noise` supplies the standard normal draws; at `t_prev = 0` the result
/// is `Ẑ0` itself.
pub fn ddpm_step(
    zt: &LatentGrid,
    x0_hat: &LatentGrid,
    t: usize,
    t_prev: usize,
    schedule: &NoiseSchedule,
    noise: &LatentGrid,
) -> Result<LatentGrid> {
    if t <= t_prev {
        return Err(Error::param(format!("a reverse step needs t > t_prev, got {t} → {t_prev}")));
    }
    schedule.check_t(t)?;
    zt.check_same_shape(x0_hat)?;
    if t_prev == 0 {
        return Ok(x0_hat.clone());
    }
    zt.check_same_shape(noise)?;
    let (a_t, a_p) = (schedule.alpha_bar(t), schedule.alpha_bar(t_prev));
    let ratio = a_t / a_p;
    let beta = 1.0 - ratio;
    let c_x0 = a_p.sqrt() * beta / (1.0 - a_t);
    let c_z = ratio.sqrt() * (1.0 - a_p) / (1.0 - a_t);
    let sd = ((1.0 - a_p) / (1.0 - a_t) * beta).max(0.0).sqrt();
    let v = zt
        .values()
        .iter()
        .zip(x0_hat.values())
        .zip(noise.values())
        .map(|((z, x), e)| c_x0 * x + c_z * z + sd * e)
        .collect();
    LatentGrid::new(zt.side(), zt.dim(), v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    /// Strictly decreasing timesteps ending at 1.
    pub steps: Vec<usize>,
    pub guidance_scale: f64,
    pub seed: u64,
    pub snap_output: bool,
}

/// `n` timesteps spread evenly from `T` down to 1.
pub fn uniform_steps(t_max: usize, n: usize) -> Result<Vec<usize>> {
    if t_max == 1 && n == 1 {
        return Ok(vec![1]);
    }
    if n < 2 || n > t_max {
        return Err(Error::param(format!("step count must lie in 2..={t_max}, got {n}")));
    }
    Ok((0..n)
        .map(|i| {
            let x = t_max as f64 - i as f64 * (t_max - 1) as f64 / (n - 1) as f64;
            x.round() as usize
        })
        .collect())
}

impl SamplerConfig {
    pub fn uniform(t_max: usize, n: usize, guidance_scale: f64, seed: u64, snap_output: bool) -> Result<Self> {
        let c = SamplerConfig { steps: uniform_steps(t_max, n)?, guidance_scale, seed, snap_output };
        c.validate(t_max)?;
        Ok(c)
    }

    pub fn validate(&self, t_max: usize) -> Result<()> {
        if self.steps.is_empty() || self.steps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::param("sampler steps must be strictly decreasing"));
        }
        if self.steps[0] > t_max || *self.steps.last().unwrap() != 1 {
            return Err(Error::param(format!("sampler steps must lie in 1..={t_max} and end at 1")));
        }
        if !(self.guidance_scale.is_finite() && self.guidance_scale >= 0.0) {
            return Err(Error::param(format!(
                "guidance scale must be finite and non-negative, got {}",
                self.guidance_scale
            )));
        }
        Ok(())
    }
}

fn normals(rng: &mut rng::Rng, side: usize, dim: usize) -> LatentGrid {
    let v = (0..side.pow(3) * dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    LatentGrid::new(side, dim, v).expect("finite normals")
}

/// Ancestral sampling from `Z_T ~ N(0, I)` along `config.steps`, with
/// classifier-free guidance when a condition is given, `Ẑ0` clamped to the
/// denoiser's range after guidance, and optional codebook snapping of the
/// result.
pub fn sample(
    denoiser: &dyn Denoiser,
    cond: &Condition,
    config: &SamplerConfig,
    codebook: Option<&Codebook>,
) -> Result<LatentGrid> {
    let schedule = denoiser.schedule();
    config.validate(schedule.steps())?;
    let s_g = config.guidance_scale;
    let guided = !cond.is_none() && s_g != 1.0;
    if guided && !denoiser.has_unconditional() {
        return Err(Error::Config(format!(
            "guidance scale {s_g} needs an unconditional path, but the denoiser was trained without condition dropout"
        )));
    }
    if config.snap_output && codebook.is_none() {
        return Err(Error::Config("snapping requested without a codebook".into()));
    }
    let (side, dim) = denoiser.latent_shape();
    let (lo, hi) = denoiser.x0_range();
    let mut rng = rng::rng(config.seed);
    let mut z = normals(&mut rng, side, dim);
    for (i, &t) in config.steps.iter().enumerate() {
        let t_prev = config.steps.get(i + 1).copied().unwrap_or(0);
        let mut x0 = if guided {
            let u = denoiser.predict_x0(&z, t, &Condition::None)?;
            let c = denoiser.predict_x0(&z, t, cond)?;
            guided_x0(&u, &c, s_g)?
        } else {
            denoiser.predict_x0(&z, t, cond)?
        };
        x0.values_mut().iter_mut().for_each(|v| *v = v.clamp(lo, hi));
        z = if t_prev == 0 {
            x0
        } else {
            let noise = normals(&mut rng, side, dim);
            ddpm_step(&z, &x0, t, t_prev, schedule, &noise)?
        };
    }
    match (config.snap_output, codebook) {
        (true, Some(book)) => snap(&z, book),
        _ => Ok(z),
    }
}

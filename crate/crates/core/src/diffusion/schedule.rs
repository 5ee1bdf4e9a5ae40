use crate::codec::LatentGrid;
use crate::error::{Error, Result};

pub const COSINE_OFFSET: f64 = 0.008;

/// Cumulative signal levels `ᾱ_0 = 1 ≥ ᾱ_1 ≥ … ≥ ᾱ_T > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
}

fn cosine_f(t: f64, t_max: f64) -> f64 {
    let c = ((t / t_max + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * std::f64::consts::FRAC_PI_2).cos();
    c * c
}

impl NoiseSchedule {
    /// `ᾱ_t = f(t)/f(0)` with `f(t) = cos²(((t/T + s)/(1 + s))·π/2)`.
    pub fn cosine(t_max: usize) -> Result<Self> {
        if t_max < 1 {
            return Err(Error::param("diffusion needs at least one step"));
        }
        let f0 = cosine_f(0.0, t_max as f64);
        let mut alpha_bar: Vec<f64> = (0..=t_max).map(|t| cosine_f(t as f64, t_max as f64) / f0).collect();
        alpha_bar[0] = 1.0;
        Self::new(alpha_bar)
    }

    /// Any non-increasing table starting at exactly 1 with positive entries.
    pub fn new(alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.len() < 2 || alpha_bar[0] != 1.0 {
            return Err(Error::param("a schedule needs ᾱ_0 = 1 and at least one step"));
        }
        if alpha_bar.iter().any(|a| !(a.is_finite() && *a > 0.0 && *a <= 1.0))
            || alpha_bar.windows(2).any(|w| w[1] > w[0])
        {
            return Err(Error::param("ᾱ must be non-increasing within (0, 1]"));
        }
        Ok(NoiseSchedule { alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn table(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub(crate) fn check_t(&self, t: usize) -> Result<()> {
        if t > self.steps() {
            Err(Error::param(format!("timestep {t} outside 0..={}", self.steps())))
        } else {
            Ok(())
        }
    }
}

/// `Z_t = √ᾱ_t·Z0 + √(1 − ᾱ_t)·ε`.
pub fn forward_noise(z0: &LatentGrid, t: usize, eps: &LatentGrid, schedule: &NoiseSchedule) -> Result<LatentGrid> {
    schedule.check_t(t)?;
    z0.check_same_shape(eps)?;
    let a = schedule.alpha_bar(t);
    let (s, n) = (a.sqrt(), (1.0 - a).sqrt());
    let v = z0.values().iter().zip(eps.values()).map(|(x, e)| s * x + n * e).collect();
    LatentGrid::new(z0.side(), z0.dim(), v)
}

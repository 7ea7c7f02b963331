use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Variance-preserving schedule with a deterministic (η = 0) reverse step.
///
/// `alpha_bar[t]` for `t = 0..=T`; index 0 is the clean end (`alpha_bar[0] = 1`)
/// and the sequence is strictly decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
}

/// Fraction of the cosine curve used, keeping `alpha_bar[T]` strictly positive.
const COSINE_SPAN: f64 = 0.98;
const COSINE_OFFSET: f64 = 0.008;

impl NoiseSchedule {
    pub fn cosine(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::config("schedule needs at least one step"));
        }
        let g = |u: f64| {
            ((u + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * std::f64::consts::FRAC_PI_2)
                .cos()
                .powi(2)
        };
        let g0 = g(0.0);
        let alpha_bar = (0..=steps)
            .map(|t| g(t as f64 / steps as f64 * COSINE_SPAN) / g0)
            .collect();
        Self::from_alpha_bar(alpha_bar)
    }

    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.len() < 2 {
            return Err(Error::config("alpha_bar needs at least two entries"));
        }
        for w in alpha_bar.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::config("alpha_bar must be strictly decreasing"));
            }
        }
        if !(alpha_bar[0] <= 1.0) || !(*alpha_bar.last().unwrap() > 0.0) {
            return Err(Error::config("alpha_bar must lie in (0, 1]"));
        }
        Ok(Self { alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn check_timestep(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::Schedule {
                t,
                steps: self.steps(),
            });
        }
        Ok(())
    }

    /// Timesteps in execution order, `T, T-1, …, 1`.
    pub fn timesteps(&self) -> impl Iterator<Item = usize> {
        (1..=self.steps()).rev()
    }

    /// `z_t = sqrt(ᾱ_t)·x0 + sqrt(1-ᾱ_t)·ε`
    pub fn add_noise(&self, x0: &Tensor, noise: &Tensor, t: usize) -> Result<Tensor> {
        let ab = self.alpha_bar[t];
        x0.scale(ab.sqrt()).add(&noise.scale((1.0 - ab).sqrt()))
    }

    /// Deterministic reverse step `t -> t-1` from a noise prediction.
    pub fn reverse_step(&self, z: &Tensor, eps: &Tensor, t: usize) -> Result<Tensor> {
        self.check_timestep(t)?;
        let ab = self.alpha_bar[t];
        let ab_prev = self.alpha_bar[t - 1];
        let x0 = z.sub(&eps.scale((1.0 - ab).sqrt()))?.scale(1.0 / ab.sqrt());
        x0.scale(ab_prev.sqrt()).add(&eps.scale((1.0 - ab_prev).sqrt()))
    }
}

use serde::{Deserialize, Serialize};

use super::Sample2D;
use crate::error::{Error, Result};

/// Upper bound applied by [`NoiseSchedule::scaled_linear`].
pub const MAX_BETA: f64 = 0.999;

/// Variance schedule `β₁ … β_T` of the forward noising chain.
///
/// Timesteps are 1-based; `ᾱ₀ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Parameter("schedule needs at least one step".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::Parameter(format!("beta {b} outside (0, 1)")));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Ok(Self { betas, alpha_bars })
    }

    /// Betas evenly spaced from `start` to `end`.
    pub fn linear(steps: usize, start: f64, end: f64) -> Result<Self> {
        match steps {
            0 => Err(Error::Parameter("schedule needs at least one step".into())),
            1 => Self::new(vec![start]),
            n => Self::new(
                (0..n)
                    .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
                    .collect(),
            ),
        }
    }

    /// Linear schedule from `1e-4` to `0.02` rescaled by `1000/T`, so short
    /// chains still end near pure noise. Betas are capped at [`MAX_BETA`].
    pub fn scaled_linear(steps: usize) -> Result<Self> {
        let scale = 1000.0 / steps.max(1) as f64;
        Self::linear(
            steps,
            (1e-4 * scale).min(MAX_BETA),
            (0.02 * scale).min(MAX_BETA),
        )
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            Err(Error::Index {
                index: t,
                max: self.steps(),
            })
        } else {
            Ok(())
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.betas[t - 1]
    }

    /// `ᾱ_t = Π_{i≤t} α_i`, defined for `0 ≤ t ≤ T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    /// `β̃_t = (1 − ᾱ_{t−1}) / (1 − ᾱ_t) · β_t`, zero at `t = 1`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        (1.0 - self.alpha_bar(t - 1)) / (1.0 - self.alpha_bar(t)) * self.beta(t)
    }

    /// Reverse-step standard deviations `σ_t = √β̃_t`; the degenerate first
    /// step reuses `β̃₂` (or `β₁` for a one-step chain).
    pub fn step_sigmas(&self) -> Vec<f64> {
        (1..=self.steps())
            .map(|t| {
                let var = if t > 1 {
                    self.posterior_variance(t)
                } else if self.steps() > 1 {
                    self.posterior_variance(2)
                } else {
                    self.beta(1)
                };
                var.sqrt()
            })
            .collect()
    }

    /// Coefficient of `x₀` in the posterior mean of `q(x_{t−1} | x_t, x₀)`.
    pub fn x0_coef(&self, t: usize) -> f64 {
        self.alpha_bar(t - 1).sqrt() * self.beta(t) / (1.0 - self.alpha_bar(t))
    }

    /// Coefficient of `x_t` in the posterior mean of `q(x_{t−1} | x_t, x₀)`.
    pub fn xt_coef(&self, t: usize) -> f64 {
        self.alpha(t).sqrt() * (1.0 - self.alpha_bar(t - 1)) / (1.0 - self.alpha_bar(t))
    }

    /// Mean of `q(x_{t−1} | x_t, x₀)`.
    pub fn posterior_mean(&self, x0: Sample2D, xt: Sample2D, t: usize) -> Sample2D {
        x0.scale(self.x0_coef(t)).add(xt.scale(self.xt_coef(t)))
    }

    /// `√ᾱ_t x₀ + √(1 − ᾱ_t) ε`.
    pub fn forward_sample(&self, x0: Sample2D, t: usize, noise: Sample2D) -> Result<Sample2D> {
        self.check_step(t)?;
        let ab = self.alpha_bar(t);
        Ok(x0.scale(ab.sqrt()).add(noise.scale((1.0 - ab).sqrt())))
    }
}

impl TryFrom<Vec<f64>> for NoiseSchedule {
    type Error = Error;

    fn try_from(betas: Vec<f64>) -> Result<Self> {
        Self::new(betas)
    }
}

impl From<NoiseSchedule> for Vec<f64> {
    fn from(s: NoiseSchedule) -> Self {
        s.betas
    }
}

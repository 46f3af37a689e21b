use serde::{Deserialize, Serialize};

use crate::diffusion::{ring_modes, Condition, Sample2D, RING_MODES, RING_RADIUS, RING_SIGMA};
use crate::error::{Error, Result};

/// Deterministic preference score: log-density under the equal-weight
/// mixture of each condition's preferred modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceOracle {
    modes: Vec<Sample2D>,
    sigma: f64,
    preferred: Vec<Vec<usize>>,
}

impl PreferenceOracle {
    /// An empty preferred set gives a constant score of zero.
    pub fn new(modes: Vec<Sample2D>, sigma: f64, preferred: Vec<Vec<usize>>) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Parameter(format!(
                "oracle sigma {sigma} must be positive"
            )));
        }
        for (c, set) in preferred.iter().enumerate() {
            if let Some(&k) = set.iter().find(|&&k| k >= modes.len()) {
                return Err(Error::Config(format!(
                    "condition {c} prefers mode {k} but only {} modes exist",
                    modes.len()
                )));
            }
        }
        Ok(Self {
            modes,
            sigma,
            preferred,
        })
    }

    /// Ring oracle where condition `c` prefers modes `2c` and `2c + 1` (mod 8).
    pub fn ring(conditions: usize) -> Self {
        let preferred = (0..conditions)
            .map(|c| vec![(2 * c) % RING_MODES, (2 * c + 1) % RING_MODES])
            .collect();
        Self::new(ring_modes(RING_MODES, RING_RADIUS), RING_SIGMA, preferred)
            .expect("ring oracle is valid")
    }

    pub fn conditions(&self) -> usize {
        self.preferred.len()
    }

    pub fn modes(&self) -> &[Sample2D] {
        &self.modes
    }

    pub fn preferred(&self, c: Condition) -> Result<&[usize]> {
        Condition::checked(c.0, self.conditions())?;
        Ok(&self.preferred[c.0])
    }

    pub fn score(&self, x: Sample2D, c: Condition) -> Result<f64> {
        let set = self.preferred(c)?;
        if set.is_empty() {
            return Ok(0.0);
        }
        let var = self.sigma * self.sigma;
        let logs: Vec<f64> = set
            .iter()
            .map(|&k| -x.distance(self.modes[k]).powi(2) / (2.0 * var))
            .collect();
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        let log_norm = -(std::f64::consts::TAU * var).ln();
        Ok(lse - (set.len() as f64).ln() + log_norm)
    }
}

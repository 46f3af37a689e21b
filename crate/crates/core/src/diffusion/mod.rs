//! Toy denoising diffusion on 2-D points.

mod data;
mod mlp;
mod policy;
mod schedule;

use serde::{Deserialize, Serialize};

pub use data::{ring_dataset, ring_modes, ConditionedSample, RING_MODES, RING_RADIUS, RING_SIGMA};
pub use mlp::{ForwardCache, Mlp};
pub use policy::{
    ancestral_sample, sample_final, step_log_ratio, step_ratio, GaussianStepPolicy,
    StepCoefficients, Trajectory, DATA_STD, HIDDEN_WIDTH, POLICY_FORMAT_VERSION,
};
pub(crate) use policy::{check_shared_sigma, standard_normal};
pub use schedule::NoiseSchedule;

use crate::error::{Error, Result};

/// A point in the 2-D data space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample2D {
    pub x: f64,
    pub y: f64,
}

impl Sample2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn add(self, other: Sample2D) -> Sample2D {
        Sample2D::new(self.x + other.x, self.y + other.y)
    }

    pub fn sub(self, other: Sample2D) -> Sample2D {
        Sample2D::new(self.x - other.x, self.y - other.y)
    }

    pub fn scale(self, k: f64) -> Sample2D {
        Sample2D::new(self.x * k, self.y * k)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn distance(self, other: Sample2D) -> f64 {
        self.sub(other).norm_sq().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Index into the condition vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Condition(pub usize);

impl Condition {
    pub fn checked(id: usize, vocabulary: usize) -> Result<Self> {
        if id < vocabulary {
            Ok(Self(id))
        } else {
            Err(Error::Index {
                index: id,
                max: vocabulary.saturating_sub(1),
            })
        }
    }

    pub fn id(self) -> usize {
        self.0
    }
}

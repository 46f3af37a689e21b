pub mod diffusion;
pub mod divergence;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod numeric;
pub mod policy;
pub mod trainer;

pub use divergence::{Alpha, Divergence, FiniteDistribution};
pub use error::{Error, Result};

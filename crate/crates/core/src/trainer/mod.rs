//! Preference-alignment trainers: an exact categorical trainer and a
//! step-wise trainer for the toy diffusion policy.

mod categorical;
mod oracle;
mod pretrain;
mod stepwise;

pub use categorical::{
    rate_ratio, synthetic_preferences, train_categorical, CategoricalPolicy, PreferenceRecord,
    PROBABILITY_FLOOR,
};
pub use oracle::PreferenceOracle;
pub use pretrain::{pretrain_reference, PretrainConfig};
pub use stepwise::{
    build_step_pairs, train_stepwise, train_stepwise_observed, StepObjective, StepPair,
    StepwiseConfig, COVERAGE_RADIUS,
};

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::loss::{generalized_loss, LossConfig, RatioPair};

/// Summary of one epoch, taken before that epoch's update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub x1: f64,
    pub x2: f64,
    pub gradient_ratio: f64,
    pub score: f64,
    pub mode_coverage: f64,
    pub pairwise_distance: f64,
}

/// Per-epoch statistics. Entry `e < epochs` describes the policy entering
/// epoch `e`; the last entry describes the trained policy.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainTrace {
    pub entries: Vec<EpochStats>,
}

impl TrainTrace {
    pub const CSV_HEADER: &'static str =
        "epoch,loss,x1,x2,gradient_ratio,score,mode_coverage,pairwise_distance";

    pub fn last(&self) -> Option<&EpochStats> {
        self.entries.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                e.epoch,
                e.loss,
                e.x1,
                e.x2,
                e.gradient_ratio,
                e.score,
                e.mode_coverage,
                e.pairwise_distance
            );
        }
        out
    }
}

/// `−ln σ(βT f'(X₁) − βT f'(X₂))` on single-step ratios.
pub fn per_timestep_bound_loss(
    cfg: &LossConfig,
    winner_step_ratio: f64,
    loser_step_ratio: f64,
    steps: usize,
) -> Result<f64> {
    if steps == 0 {
        return Err(Error::Parameter("step count must be positive".into()));
    }
    let pair = RatioPair::new(winner_step_ratio, loser_step_ratio)?;
    Ok(generalized_loss(&cfg.scaled(steps as f64)?, &pair))
}

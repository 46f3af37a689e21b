use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{standard_normal, ConditionedSample, GaussianStepPolicy, NoiseSchedule};
use crate::error::{Error, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// The learning rate decays linearly to this fraction of its initial value.
const FINAL_LR_FRACTION: f64 = 0.05;
/// Decay of the parameter moving average that is returned as the reference.
const EMA_DECAY: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 1e-2,
            batch_size: 128,
            seed: 0,
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grad[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Fits the reference denoiser by regressing `x̂₀(x_t, t, c)` onto the clean
/// point (squared error weighted by `1/out_t²`), with `t` uniform and `x_t` drawn from the forward process. Each epoch
/// is one shuffled pass over the dataset.
pub fn pretrain_reference(
    schedule: &NoiseSchedule,
    dataset: &[ConditionedSample],
    conditions: usize,
    cfg: &PretrainConfig,
) -> Result<GaussianStepPolicy> {
    if dataset.is_empty() {
        return Err(Error::Config("pre-training dataset is empty".into()));
    }
    if cfg.batch_size == 0 || !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::Config(format!(
            "batch size {} and learning rate {} must be positive",
            cfg.batch_size, cfg.lr
        )));
    }
    let mut seen = vec![false; conditions];
    for s in dataset {
        match seen.get_mut(s.condition.0) {
            Some(flag) => *flag = true,
            None => {
                return Err(Error::Config(format!(
                    "dataset uses condition {} but only {conditions} exist",
                    s.condition.0
                )))
            }
        }
    }
    if let Some(c) = seen.iter().position(|&s| !s) {
        return Err(Error::Config(format!(
            "dataset has no samples for condition {c}"
        )));
    }

    let mut policy = GaussianStepPolicy::new(schedule, conditions, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut adam = Adam::new(policy.param_count());
    let mut grad = vec![0.0; policy.param_count()];
    let mut average = policy.params().to_vec();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let total_batches = (cfg.epochs * dataset.len().div_ceil(cfg.batch_size)).max(1);
    let mut batch_index = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let s = dataset[i];
                let t = rng.random_range(1..=schedule.steps());
                let xt = schedule.forward_sample(s.sample, t, standard_normal(&mut rng))?;
                let (x0, cache) = policy.predict_x0_cached(xt, t, s.condition)?;
                // Weighting by 1/out² makes this a unit-scale regression on the network output.
                let weight = 2.0 / policy.coefficients().out[t - 1].powi(2);
                policy.backward_x0(&cache, t, x0.sub(s.sample).scale(weight), scale, &mut grad);
            }
            let progress = batch_index as f64 / total_batches as f64;
            let lr = cfg.lr * (1.0 - (1.0 - FINAL_LR_FRACTION) * progress);
            adam.update(policy.params_mut(), &grad, lr);
            batch_index += 1;
            // Short warm-up so the average is not anchored to the initialization.
            let decay = EMA_DECAY.min((1.0 + batch_index as f64) / (10.0 + batch_index as f64));
            for (a, w) in average.iter_mut().zip(policy.params()) {
                *a = decay * *a + (1.0 - decay) * w;
            }
        }
        if policy.params().iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged(
                "pre-training produced non-finite parameters".into(),
            ));
        }
    }
    policy.params_mut().copy_from_slice(&average);
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{Condition, Sample2D};

    #[test]
    fn zero_epochs_is_the_initial_policy() {
        let schedule = NoiseSchedule::scaled_linear(20).unwrap();
        let data = vec![ConditionedSample {
            sample: Sample2D::new(1.0, 1.0),
            condition: Condition(0),
        }];
        let cfg = PretrainConfig {
            epochs: 0,
            ..PretrainConfig::default()
        };
        let p = pretrain_reference(&schedule, &data, 1, &cfg).unwrap();
        assert_eq!(p, GaussianStepPolicy::new(&schedule, 1, cfg.seed).unwrap());
    }

    #[test]
    fn rejects_bad_datasets() {
        let schedule = NoiseSchedule::scaled_linear(20).unwrap();
        let cfg = PretrainConfig::default();
        assert!(matches!(
            pretrain_reference(&schedule, &[], 1, &cfg),
            Err(Error::Config(_))
        ));
        let data = vec![ConditionedSample {
            sample: Sample2D::new(0.0, 0.0),
            condition: Condition(0),
        }];
        assert!(pretrain_reference(&schedule, &data, 2, &cfg).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut adam = Adam::new(2);
        let mut p = vec![1.0, -1.0];
        adam.update(&mut p, &[3.0, -0.5], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-7 && (p[1] + 0.9).abs() < 1e-7);
    }
}

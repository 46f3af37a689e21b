use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EpochStats, PreferenceOracle, TrainTrace};
use crate::diffusion::{sample_final, Condition, GaussianStepPolicy, Sample2D};
use crate::error::{Error, Result};
use crate::loss::{gradient_ratio, log_ratio_gradients, LossConfig, RatioPair};
use crate::metrics::{sample_diversity, SampleSet};
use crate::numeric::{relative_error, sigmoid, softplus};

/// Samples within this distance of a mode centre count as covering it.
pub const COVERAGE_RADIUS: f64 = 0.3;
const EVAL_SEED_SALT: u64 = 0xe7a1_5eed;
const CHECK_PARAMS: usize = 24;
const CHECK_STEP: f64 = 1e-5;
const CHECK_TOL: f64 = 1e-4;

/// Preferred and dispreferred continuations of a shared state `x_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPair {
    pub condition: Condition,
    pub timestep: usize,
    pub x_t: Sample2D,
    pub winner: Sample2D,
    pub loser: Sample2D,
}

/// Per-step loss applied to each pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepObjective {
    /// `−ln σ(β f'(X₁) − β f'(X₂))` on step ratios.
    Generalized,
    /// The same loss with β replaced by `βT`.
    Bound,
    /// `−ln σ(β ln X₁ − β ln X₂)` written out directly, independent of the
    /// divergence setting.
    DirectSpo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepwiseConfig {
    pub loss: LossConfig,
    pub objective: StepObjective,
    pub epochs: usize,
    pub lr: f64,
    pub k: usize,
    pub pairs_per_epoch: usize,
    pub batch_size: usize,
    pub conditions: Vec<usize>,
    pub eval_samples: usize,
    pub seed: u64,
    pub gradient_check: bool,
}

impl StepwiseConfig {
    pub fn new(loss: LossConfig) -> Self {
        Self {
            loss,
            objective: StepObjective::Generalized,
            epochs: 30,
            lr: 1e-3,
            k: 4,
            pairs_per_epoch: 400,
            batch_size: 50,
            conditions: vec![0],
            eval_samples: 500,
            seed: 0,
            gradient_check: false,
        }
    }

    fn validate(&self, policy: &GaussianStepPolicy, oracle: &PreferenceOracle) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!(
                "k = {} but at least 2 candidates are needed",
                self.k
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        if self.pairs_per_epoch == 0 || self.batch_size == 0 || self.eval_samples == 0 {
            return Err(Error::Config(
                "pairs_per_epoch, batch_size and eval_samples must be positive".into(),
            ));
        }
        if self.conditions.is_empty() {
            return Err(Error::Config("no training conditions".into()));
        }
        for &c in &self.conditions {
            if c >= policy.conditions() || c >= oracle.conditions() {
                return Err(Error::Config(format!(
                    "condition {c} is outside the policy ({}) or oracle ({}) vocabulary",
                    policy.conditions(),
                    oracle.conditions()
                )));
            }
        }
        Ok(())
    }
}

/// Oracle input for a candidate `x_{t−1}`: the policy's one-step estimate
/// of `x₀`, or the candidate itself at the last step.
fn projection(
    policy: &GaussianStepPolicy,
    candidate: Sample2D,
    t: usize,
    c: Condition,
) -> Result<Sample2D> {
    if t > 1 {
        policy.predict_x0(candidate, t - 1, c)
    } else {
        Ok(candidate)
    }
}

/// Runs one reverse chain, drawing `k` candidates per step, pairing the best
/// and worst by oracle score and continuing from the best. Ties go to the
/// lowest candidate index.
pub fn build_step_pairs(
    policy: &GaussianStepPolicy,
    oracle: &PreferenceOracle,
    c: Condition,
    k: usize,
    seed: u64,
) -> Result<Vec<StepPair>> {
    if k < 2 {
        return Err(Error::Config(format!(
            "k = {k} but at least 2 candidates are needed"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = crate::diffusion::standard_normal(&mut rng);
    let mut pairs = Vec::with_capacity(policy.steps());
    for t in (1..=policy.steps()).rev() {
        let candidates: Vec<Sample2D> = (0..k)
            .map(|_| policy.sample_step(x, t, c, &mut rng))
            .collect::<Result<_>>()?;
        let scores: Vec<f64> = candidates
            .iter()
            .map(|&cand| oracle.score(projection(policy, cand, t, c)?, c))
            .collect::<Result<_>>()?;
        let mut best = 0;
        for i in 1..k {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        let mut worst = if best == 0 { 1 } else { 0 };
        for i in 0..k {
            if i != best && scores[i] < scores[worst] {
                worst = i;
            }
        }
        pairs.push(StepPair {
            condition: c,
            timestep: t,
            x_t: x,
            winner: candidates[best],
            loser: candidates[worst],
        });
        x = candidates[best];
    }
    Ok(pairs)
}

/// Loss and its derivatives with respect to the two step log-ratios.
fn pair_objective(cfg: &StepwiseConfig, steps: usize, u1: f64, u2: f64) -> Result<(f64, f64, f64)> {
    match cfg.objective {
        StepObjective::Generalized | StepObjective::Bound => {
            let loss_cfg = if cfg.objective == StepObjective::Bound {
                cfg.loss.scaled(steps as f64)?
            } else {
                cfg.loss
            };
            let g = log_ratio_gradients(&loss_cfg, &RatioPair::from_logs(u1, u2)?);
            Ok((g.loss, g.d_ln_x1, g.d_ln_x2))
        }
        StepObjective::DirectSpo => {
            let beta = cfg.loss.beta;
            let z = beta * (u1 - u2);
            let w = beta * sigmoid(-z);
            Ok((softplus(-z), -w, w))
        }
    }
}

#[derive(Default)]
struct BatchStats {
    loss: f64,
    x1: f64,
    x2: f64,
    ratio: f64,
}

/// Mean objective over `pairs`; adds its parameter gradient into `grad` when given.
fn batch_objective(
    theta: &GaussianStepPolicy,
    reference: &GaussianStepPolicy,
    pairs: &[StepPair],
    cfg: &StepwiseConfig,
    mut grad: Option<&mut [f64]>,
) -> Result<BatchStats> {
    let n = pairs.len() as f64;
    let mut stats = BatchStats::default();
    for (i, p) in pairs.iter().enumerate() {
        let (t, c, xt) = (p.timestep, p.condition, p.x_t);
        let u1 = theta.step_log_prob(p.winner, xt, t, c)?
            - reference.step_log_prob(p.winner, xt, t, c)?;
        let u2 =
            theta.step_log_prob(p.loser, xt, t, c)? - reference.step_log_prob(p.loser, xt, t, c)?;
        let (loss, g1, g2) = pair_objective(cfg, theta.steps(), u1, u2)
            .map_err(|e| Error::Diverged(format!("pair {i} at step {t}: {e}")))?;
        if !(loss.is_finite() && g1.is_finite() && g2.is_finite()) {
            return Err(Error::Diverged(format!(
                "pair {i} at step {t} gives loss {loss} (ln X1 = {u1}, ln X2 = {u2})"
            )));
        }
        stats.loss += loss / n;
        stats.x1 += u1.exp() / n;
        stats.x2 += u2.exp() / n;
        stats.ratio += gradient_ratio(&cfg.loss, &RatioPair::from_logs(u1, u2)?) / n;
        if let Some(g) = grad.as_deref_mut() {
            theta.accumulate_log_prob_grad(p.winner, xt, t, c, g1 / n, g)?;
            theta.accumulate_log_prob_grad(p.loser, xt, t, c, g2 / n, g)?;
        }
    }
    Ok(stats)
}

fn epoch_pairs(
    theta: &GaussianStepPolicy,
    oracle: &PreferenceOracle,
    cfg: &StepwiseConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<StepPair>> {
    let chains = cfg.pairs_per_epoch.div_ceil(theta.steps());
    let mut pairs = Vec::with_capacity(chains * theta.steps());
    for j in 0..chains {
        let c = Condition(cfg.conditions[j % cfg.conditions.len()]);
        pairs.extend(build_step_pairs(theta, oracle, c, cfg.k, rng.random())?);
    }
    pairs.shuffle(rng);
    pairs.truncate(cfg.pairs_per_epoch);
    Ok(pairs)
}

fn evaluate(
    theta: &GaussianStepPolicy,
    reference: &GaussianStepPolicy,
    oracle: &PreferenceOracle,
    cfg: &StepwiseConfig,
    pairs: &[StepPair],
    epoch: usize,
) -> Result<EpochStats> {
    let b = batch_objective(theta, reference, pairs, cfg, None)?;
    let (mut score, mut coverage, mut distance) = (0.0, 0.0, 0.0);
    for &c in &cfg.conditions {
        let samples = sample_final(
            theta,
            Condition(c),
            cfg.eval_samples,
            cfg.seed ^ EVAL_SEED_SALT,
        )?;
        for &s in &samples {
            score += oracle.score(s, Condition(c))?;
        }
        let d = sample_diversity(
            &SampleSet::new(samples, Condition(c))?,
            oracle.modes(),
            COVERAGE_RADIUS,
        );
        coverage += d.mode_coverage as f64;
        distance += d.mean_pairwise_distance;
    }
    let m = cfg.conditions.len() as f64;
    Ok(EpochStats {
        epoch,
        loss: b.loss,
        x1: b.x1,
        x2: b.x2,
        gradient_ratio: b.ratio,
        score: score / (m * cfg.eval_samples as f64),
        mode_coverage: coverage / m,
        pairwise_distance: distance / m,
    })
}

fn gradient_self_check(
    theta: &GaussianStepPolicy,
    reference: &GaussianStepPolicy,
    pairs: &[StepPair],
    cfg: &StepwiseConfig,
) -> Result<()> {
    let mut grad = vec![0.0; theta.param_count()];
    batch_objective(theta, reference, pairs, cfg, Some(&mut grad))?;
    let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut probe = theta.clone();
    for _ in 0..CHECK_PARAMS {
        let i = rng.random_range(0..theta.param_count());
        let w = theta.params()[i];
        probe.params_mut()[i] = w + CHECK_STEP;
        let up = batch_objective(&probe, reference, pairs, cfg, None)?.loss;
        probe.params_mut()[i] = w - CHECK_STEP;
        let down = batch_objective(&probe, reference, pairs, cfg, None)?.loss;
        probe.params_mut()[i] = w;
        let fd = (up - down) / (2.0 * CHECK_STEP);
        // Entries far below the largest gradient are dominated by rounding.
        if relative_error(grad[i], fd, 1e-3 * scale) > CHECK_TOL {
            return Err(Error::Precondition(format!(
                "gradient self-check failed at parameter {i}: analytic {}, finite difference {fd}",
                grad[i]
            )));
        }
    }
    Ok(())
}

/// Mini-batch gradient descent on step-wise preference pairs drawn on-policy
/// each epoch.
pub fn train_stepwise(
    policy: &GaussianStepPolicy,
    reference: &GaussianStepPolicy,
    oracle: &PreferenceOracle,
    cfg: &StepwiseConfig,
) -> Result<(GaussianStepPolicy, TrainTrace)> {
    train_stepwise_observed(policy, reference, oracle, cfg, |_, _| {})
}

/// [`train_stepwise`], calling `observe(epoch, θ)` after each epoch's updates.
pub fn train_stepwise_observed(
    policy: &GaussianStepPolicy,
    reference: &GaussianStepPolicy,
    oracle: &PreferenceOracle,
    cfg: &StepwiseConfig,
    mut observe: impl FnMut(usize, &GaussianStepPolicy),
) -> Result<(GaussianStepPolicy, TrainTrace)> {
    cfg.validate(policy, oracle)?;
    if policy.param_count() != reference.param_count() {
        return Err(Error::Config(
            "policy and reference architectures differ".into(),
        ));
    }
    for t in 1..=policy.steps() {
        crate::diffusion::check_shared_sigma(policy, reference, t)?;
    }
    let mut theta = policy.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = TrainTrace::default();
    let mut grad = vec![0.0; theta.param_count()];
    for epoch in 0..cfg.epochs {
        let pairs = epoch_pairs(&theta, oracle, cfg, &mut rng)?;
        if epoch == 0 && cfg.gradient_check {
            gradient_self_check(
                &theta,
                reference,
                &pairs[..cfg.batch_size.min(pairs.len())],
                cfg,
            )?;
        }
        trace
            .entries
            .push(evaluate(&theta, reference, oracle, cfg, &pairs, epoch)?);
        for batch in pairs.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            batch_objective(&theta, reference, batch, cfg, Some(&mut grad))?;
            for (w, g) in theta.params_mut().iter_mut().zip(&grad) {
                *w -= cfg.lr * g;
            }
            if theta.params().iter().any(|w| !w.is_finite()) {
                return Err(Error::Diverged(format!(
                    "non-finite parameters in epoch {epoch}"
                )));
            }
        }
        observe(epoch, &theta);
    }
    let pairs = epoch_pairs(&theta, oracle, cfg, &mut rng)?;
    trace.entries.push(evaluate(
        &theta, reference, oracle, cfg, &pairs, cfg.epochs,
    )?);
    Ok((theta, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{ring_modes, NoiseSchedule};
    use crate::divergence::Divergence;
    use std::f64::consts::LN_2;

    fn setup() -> (GaussianStepPolicy, PreferenceOracle) {
        let schedule = NoiseSchedule::scaled_linear(10).unwrap();
        (
            GaussianStepPolicy::new(&schedule, 2, 5).unwrap(),
            PreferenceOracle::ring(2),
        )
    }

    fn small_cfg(d: Divergence) -> StepwiseConfig {
        let mut cfg = StepwiseConfig::new(LossConfig::new(d, 10.0).unwrap());
        cfg.epochs = 2;
        cfg.pairs_per_epoch = 40;
        cfg.batch_size = 10;
        cfg.eval_samples = 20;
        cfg.conditions = vec![0, 1];
        cfg.lr = 1e-4;
        cfg
    }

    #[test]
    fn constant_oracle_ties_go_to_the_lowest_index() {
        let (policy, _) = setup();
        let flat = PreferenceOracle::new(ring_modes(8, 2.0), 0.1, vec![vec![]]).unwrap();
        let pairs = build_step_pairs(&policy, &flat, Condition(0), 2, 3).unwrap();
        assert_eq!(pairs.len(), 10);
        // Reproduce the candidate stream: winner is the first draw, loser the second.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = crate::diffusion::standard_normal(&mut rng);
        for p in &pairs {
            let a = policy
                .sample_step(x, p.timestep, Condition(0), &mut rng)
                .unwrap();
            let b = policy
                .sample_step(x, p.timestep, Condition(0), &mut rng)
                .unwrap();
            assert_eq!((p.x_t, p.winner, p.loser), (x, a, b));
            x = a;
        }
    }

    #[test]
    fn pairs_are_deterministic_and_chained() {
        let (policy, oracle) = setup();
        let a = build_step_pairs(&policy, &oracle, Condition(1), 4, 9).unwrap();
        assert_eq!(
            a,
            build_step_pairs(&policy, &oracle, Condition(1), 4, 9).unwrap()
        );
        for w in a.windows(2) {
            assert_eq!(w[1].x_t, w[0].winner);
            assert_eq!(w[1].timestep + 1, w[0].timestep);
        }
        assert!(build_step_pairs(&policy, &oracle, Condition(0), 1, 9).is_err());
    }

    #[test]
    fn initial_loss_is_ln_two() {
        let (policy, oracle) = setup();
        for objective in [
            StepObjective::Generalized,
            StepObjective::Bound,
            StepObjective::DirectSpo,
        ] {
            let mut cfg = small_cfg(Divergence::JensenShannon);
            cfg.objective = objective;
            let (_, trace) = train_stepwise(&policy, &policy, &oracle, &cfg).unwrap();
            assert_eq!(trace.entries[0].loss, LN_2);
            assert!((trace.entries[0].x1 - 1.0).abs() < 1e-12);
            assert_eq!(trace.entries.len(), 3);
        }
    }

    #[test]
    fn self_check_accepts_analytic_gradients() {
        let (reference, oracle) = setup();
        let mut theta = reference.clone();
        for (i, w) in theta.params_mut().iter_mut().enumerate() {
            *w += 0.01 * ((i * 7919) % 13) as f64 / 13.0;
        }
        for d in Divergence::family(0.3).unwrap() {
            let mut cfg = small_cfg(d);
            cfg.gradient_check = true;
            cfg.epochs = 1;
            train_stepwise(&theta, &reference, &oracle, &cfg).unwrap();
        }
    }

    #[test]
    fn config_validation() {
        let (policy, oracle) = setup();
        let mut cfg = small_cfg(Divergence::ReverseKl);
        cfg.k = 1;
        assert!(matches!(
            train_stepwise(&policy, &policy, &oracle, &cfg),
            Err(Error::Config(_))
        ));
        let mut cfg = small_cfg(Divergence::ReverseKl);
        cfg.conditions = vec![2];
        assert!(train_stepwise(&policy, &policy, &oracle, &cfg).is_err());
        let other =
            GaussianStepPolicy::new(&NoiseSchedule::scaled_linear(12).unwrap(), 2, 5).unwrap();
        assert!(
            train_stepwise(&policy, &other, &oracle, &small_cfg(Divergence::ReverseKl)).is_err()
        );
    }
}

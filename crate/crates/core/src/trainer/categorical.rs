use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EpochStats, TrainTrace};
use crate::diffusion::Condition;
use crate::error::{Error, Result};
use crate::loss::{gradient_ratio, log_ratio_gradients, LossConfig, RatioPair};

/// Outcomes below this probability do not count towards mode coverage.
pub const PROBABILITY_FLOOR: f64 = 1e-3;
const CONSERVATION_TOL: f64 = 1e-12;

/// Softmax policy over a finite outcome set, one logit row per condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalPolicy {
    conditions: usize,
    outcomes: usize,
    logits: Vec<f64>,
}

impl CategoricalPolicy {
    pub fn new(conditions: usize, outcomes: usize, logits: Vec<f64>) -> Result<Self> {
        if conditions == 0 || outcomes < 2 {
            return Err(Error::Shape(format!(
                "{conditions} conditions x {outcomes} outcomes"
            )));
        }
        if logits.len() != conditions * outcomes {
            return Err(Error::Shape(format!(
                "{} logits for {conditions} x {outcomes}",
                logits.len()
            )));
        }
        if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("logit {i} is {}", logits[i])));
        }
        Ok(Self {
            conditions,
            outcomes,
            logits,
        })
    }

    pub fn uniform(conditions: usize, outcomes: usize) -> Result<Self> {
        Self::new(conditions, outcomes, vec![0.0; conditions * outcomes])
    }

    /// Logits drawn from `N(0, scale²)`.
    pub fn random(conditions: usize, outcomes: usize, scale: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = (0..conditions * outcomes)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect();
        Self::new(conditions, outcomes, logits)
    }

    pub fn conditions(&self) -> usize {
        self.conditions
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    fn row(&self, c: Condition) -> &[f64] {
        &self.logits[c.0 * self.outcomes..(c.0 + 1) * self.outcomes]
    }

    pub fn log_probs(&self, c: Condition) -> Result<Vec<f64>> {
        Condition::checked(c.0, self.conditions)?;
        let row = self.row(c);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        Ok(row.iter().map(|v| v - lse).collect())
    }

    pub fn probabilities(&self, c: Condition) -> Result<Vec<f64>> {
        Ok(self.log_probs(c)?.into_iter().map(f64::exp).collect())
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.conditions != other.conditions || self.outcomes != other.outcomes {
            return Err(Error::Shape(format!(
                "policy is {}x{}, reference is {}x{}",
                self.conditions, self.outcomes, other.conditions, other.outcomes
            )));
        }
        Ok(())
    }
}

/// A preferred/dispreferred outcome pair under one condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub condition: Condition,
    pub winner: usize,
    pub loser: usize,
}

impl PreferenceRecord {
    pub fn new(condition: Condition, winner: usize, loser: usize) -> Result<Self> {
        if winner == loser {
            return Err(Error::Config(format!(
                "winner and loser are both outcome {winner}"
            )));
        }
        Ok(Self {
            condition,
            winner,
            loser,
        })
    }

    fn check(&self, policy: &CategoricalPolicy) -> Result<()> {
        Condition::checked(self.condition.0, policy.conditions)?;
        for k in [self.winner, self.loser] {
            if k >= policy.outcomes {
                return Err(Error::Index {
                    index: k,
                    max: policy.outcomes - 1,
                });
            }
        }
        if self.winner == self.loser {
            return Err(Error::Config(format!(
                "winner and loser are both outcome {}",
                self.winner
            )));
        }
        Ok(())
    }
}

/// A random reference policy and `n` records whose winner always has the
/// higher hidden utility.
pub fn synthetic_preferences(
    conditions: usize,
    outcomes: usize,
    n: usize,
    seed: u64,
) -> Result<(CategoricalPolicy, Vec<PreferenceRecord>)> {
    let reference = CategoricalPolicy::random(conditions, outcomes, 0.5, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let utility: Vec<f64> = (0..conditions * outcomes)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let records = (0..n)
        .map(|_| {
            let c = rng.random_range(0..conditions);
            let a = rng.random_range(0..outcomes);
            let b = (a + rng.random_range(1..outcomes)) % outcomes;
            let (w, l) = if utility[c * outcomes + a] >= utility[c * outcomes + b] {
                (a, b)
            } else {
                (b, a)
            };
            PreferenceRecord::new(Condition(c), w, l)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((reference, records))
}

struct Evaluation {
    stats: EpochStats,
    grad: Vec<f64>,
}

fn evaluate(
    policy: &CategoricalPolicy,
    reference: &CategoricalPolicy,
    data: &[PreferenceRecord],
    cfg: &LossConfig,
    epoch: usize,
) -> Result<Evaluation> {
    let k = policy.outcomes;
    let log_p: Vec<Vec<f64>> = (0..policy.conditions)
        .map(|c| policy.log_probs(Condition(c)))
        .collect::<Result<_>>()?;
    let log_ref: Vec<Vec<f64>> = (0..reference.conditions)
        .map(|c| reference.log_probs(Condition(c)))
        .collect::<Result<_>>()?;

    let n = data.len() as f64;
    let mut grad = vec![0.0; policy.logits.len()];
    let (mut loss, mut x1, mut x2, mut ratio, mut score) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, rec) in data.iter().enumerate() {
        let c = rec.condition.0;
        let u1 = log_p[c][rec.winner] - log_ref[c][rec.winner];
        let u2 = log_p[c][rec.loser] - log_ref[c][rec.loser];
        let pair = RatioPair::from_logs(u1, u2)
            .map_err(|e| Error::Diverged(format!("record {i} ({rec:?}): {e}")))?;
        let g = log_ratio_gradients(cfg, &pair);
        let finite = [g.loss, g.d_ln_x1, g.d_ln_x2, pair.x1(), pair.x2()]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Diverged(format!(
                "record {i} ({rec:?}) gives loss {} at ln X1 = {u1}, ln X2 = {u2}",
                g.loss
            )));
        }
        loss += g.loss;
        x1 += pair.x1();
        x2 += pair.x2();
        ratio += gradient_ratio(cfg, &pair);
        score += log_p[c][rec.winner].exp();
        // ∂ ln p_j / ∂ logit_m = 1{j = m} − p_m.
        let row = &mut grad[c * k..(c + 1) * k];
        for (m, g_m) in row.iter_mut().enumerate() {
            let p_m = log_p[c][m].exp();
            let dw = if m == rec.winner { 1.0 } else { 0.0 } - p_m;
            let dl = if m == rec.loser { 1.0 } else { 0.0 } - p_m;
            *g_m += (g.d_ln_x1 * dw + g.d_ln_x2 * dl) / n;
        }
    }

    let mut used: Vec<usize> = data.iter().map(|r| r.condition.0).collect();
    used.sort_unstable();
    used.dedup();
    let (mut coverage, mut distance) = (0.0, 0.0);
    for &c in &used {
        let p: Vec<f64> = log_p[c].iter().map(|v| v.exp()).collect();
        coverage += p.iter().filter(|&&v| v >= PROBABILITY_FLOOR).count() as f64;
        distance += 1.0 - p.iter().map(|v| v * v).sum::<f64>();
    }
    let m = used.len() as f64;
    Ok(Evaluation {
        stats: EpochStats {
            epoch,
            loss: loss / n,
            x1: x1 / n,
            x2: x2 / n,
            gradient_ratio: ratio / n,
            score: score / n,
            mode_coverage: coverage / m,
            pairwise_distance: distance / m,
        },
        grad,
    })
}

fn descend(policy: &mut CategoricalPolicy, grad: &[f64], lr: f64) -> Result<()> {
    for (w, g) in policy.logits.iter_mut().zip(grad) {
        *w -= lr * g;
    }
    for c in 0..policy.conditions {
        let p = policy.probabilities(Condition(c))?;
        let total: f64 = p.iter().sum();
        if p.iter().any(|v| !v.is_finite()) || (total - 1.0).abs() > CONSERVATION_TOL {
            return Err(Error::Diverged(format!(
                "condition {c} probabilities sum to {total} after the update"
            )));
        }
    }
    Ok(())
}

fn check_inputs(
    policy: &CategoricalPolicy,
    reference: &CategoricalPolicy,
    data: &[PreferenceRecord],
    lr: f64,
) -> Result<()> {
    policy.same_shape(reference)?;
    if data.is_empty() {
        return Err(Error::Config("no preference records".into()));
    }
    for rec in data {
        rec.check(policy)?;
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Parameter(format!(
            "learning rate {lr} must be positive"
        )));
    }
    Ok(())
}

/// Full-batch gradient descent on the mean generalized loss.
pub fn train_categorical(
    policy: &CategoricalPolicy,
    reference: &CategoricalPolicy,
    data: &[PreferenceRecord],
    cfg: &LossConfig,
    epochs: usize,
    lr: f64,
) -> Result<(CategoricalPolicy, TrainTrace)> {
    check_inputs(policy, reference, data, lr)?;
    let mut theta = policy.clone();
    let mut trace = TrainTrace::default();
    for epoch in 0..epochs {
        let eval = evaluate(&theta, reference, data, cfg, epoch)?;
        trace.entries.push(eval.stats);
        descend(&mut theta, &eval.grad, lr)?;
    }
    trace
        .entries
        .push(evaluate(&theta, reference, data, cfg, epochs)?.stats);
    Ok((theta, trace))
}

/// `|ΔX̄₂ / ΔX̄₁|` over one gradient step of size `lr` from `policy`, where
/// `X̄` are the record means.
pub fn rate_ratio(
    policy: &CategoricalPolicy,
    reference: &CategoricalPolicy,
    data: &[PreferenceRecord],
    cfg: &LossConfig,
    lr: f64,
) -> Result<f64> {
    check_inputs(policy, reference, data, lr)?;
    let before = evaluate(policy, reference, data, cfg, 0)?;
    let mut next = policy.clone();
    descend(&mut next, &before.grad, lr)?;
    let after = evaluate(&next, reference, data, cfg, 1)?.stats;
    Ok(((after.x2 - before.stats.x2) / (after.x1 - before.stats.x1)).abs())
}

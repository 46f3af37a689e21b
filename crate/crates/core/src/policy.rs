//! Optimal policy under an f-divergence penalty.
//!
//! Maximizing `E_π[Q] − β D_f(π ‖ π_ref)` over the simplex gives the KKT
//! stationary point
//!
//! ```text
//! π(a) = π_ref(a) · (f')⁻¹((Q(a) − λ) / β)
//! ```
//!
//! with the multiplier λ fixed by `Σ π = 1`. Conversely the reward can be read
//! back from a policy as `Q(a) = β f'(π(a)/π_ref(a)) + λ`.

use crate::divergence::{Divergence, FiniteDistribution};
use crate::error::{Error, Result};
use crate::loss::LossConfig;

/// Iteration cap for the λ bisection.
pub const MAX_BISECTION_STEPS: usize = 200;

/// Largest accepted `|Σ π − 1|` at the returned λ.
pub const RESIDUAL_TOL: f64 = 1e-10;

const EARLY_STOP: f64 = 1e-12;

/// Q values, reference policy, β and divergence for a single state.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteAlignmentProblem {
    q_values: Vec<f64>,
    pi_ref: FiniteDistribution,
    beta: f64,
    divergence: Divergence,
}

impl DiscreteAlignmentProblem {
    pub fn new(
        q_values: Vec<f64>,
        pi_ref: FiniteDistribution,
        beta: f64,
        divergence: Divergence,
    ) -> Result<Self> {
        if q_values.len() != pi_ref.len() {
            return Err(Error::Shape(format!(
                "{} Q values for {} reference probabilities",
                q_values.len(),
                pi_ref.len()
            )));
        }
        if let Some(q) = q_values.iter().find(|q| !q.is_finite()) {
            return Err(Error::Parameter(format!("Q value {q} is not finite")));
        }
        if !pi_ref.is_strictly_positive() {
            return Err(Error::Distribution(
                "reference policy must be strictly positive on every action".into(),
            ));
        }
        LossConfig::new(divergence, beta)?;
        Ok(Self {
            q_values,
            pi_ref,
            beta,
            divergence,
        })
    }

    pub fn q_values(&self) -> &[f64] {
        &self.q_values
    }

    pub fn pi_ref(&self) -> &FiniteDistribution {
        &self.pi_ref
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn divergence(&self) -> Divergence {
        self.divergence
    }

    /// `Σ π_ref(a) (f')⁻¹((Q(a) − λ)/β)`; `+∞` where λ leaves the range of `f'`.
    pub fn normalization_mass(&self, lambda: f64) -> f64 {
        let mut mass = 0.0;
        for (&q, &p) in self.q_values.iter().zip(self.pi_ref.iter()) {
            match self.divergence.f_prime_inverse((q - lambda) / self.beta) {
                Ok(x) => mass += p * x,
                Err(_) => return f64::INFINITY,
            }
        }
        mass
    }

    /// Interval `[lo, hi]` known to contain the normalizing λ.
    ///
    /// At `hi = max Q − β f'(1)` every ratio is at most 1, so the mass is at
    /// most 1. At `min Q − β f'(1)` every ratio is at least 1; when that point
    /// falls outside the range of `f'` the lower end is clipped to the range
    /// edge, where the mass diverges.
    pub fn lambda_bracket(&self) -> (f64, f64) {
        let d = &self.divergence;
        let prime_at_one = d.prime_of_log(0.0);
        let q_max = self
            .q_values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let q_min = self.q_values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = q_max - self.beta * prime_at_one;
        let lo = (q_min - self.beta * prime_at_one).max(q_max - self.beta * d.prime_supremum());
        (lo, hi)
    }

    /// `E_π[Q] − β D_f(π ‖ π_ref)`.
    pub fn objective(&self, policy: &FiniteDistribution) -> Result<f64> {
        if policy.len() != self.q_values.len() {
            return Err(Error::Shape(format!(
                "policy has {} actions, problem has {}",
                policy.len(),
                self.q_values.len()
            )));
        }
        let reward: f64 = policy.iter().zip(&self.q_values).map(|(p, q)| p * q).sum();
        Ok(reward - self.beta * self.divergence.value(policy, &self.pi_ref)?)
    }
}

/// Normalized optimal policy with its multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalPolicySolution {
    pub policy: FiniteDistribution,
    pub lambda: f64,
    pub residual: f64,
}

/// Solves for λ by bisection on the strictly decreasing normalization mass.
pub fn solve_optimal_policy(problem: &DiscreteAlignmentProblem) -> Result<OptimalPolicySolution> {
    let (mut lo, mut hi) = problem.lambda_bracket();
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::Infeasible(format!(
            "bracket [{lo}, {hi}] for beta={} and Q range {:?}",
            problem.beta, problem.q_values
        )));
    }
    if problem.q_values.len() == 1 || lo == hi {
        return finish(problem, hi, 0);
    }
    let hi_mass = problem.normalization_mass(hi);
    if !(hi_mass <= 1.0 + EARLY_STOP) {
        return Err(Error::Infeasible(format!(
            "mass {hi_mass} at upper bracket end {hi} exceeds 1"
        )));
    }
    if (hi_mass - 1.0).abs() <= EARLY_STOP {
        return finish(problem, hi, 0);
    }

    let mut lambda = hi;
    let mut steps = 0;
    while steps < MAX_BISECTION_STEPS {
        steps += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        lambda = mid;
        let mass = problem.normalization_mass(mid);
        if (mass - 1.0).abs() <= EARLY_STOP {
            break;
        }
        if mass > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // The last midpoint can sit on the infinite side of the range edge.
    if !problem.normalization_mass(lambda).is_finite() {
        lambda = hi;
    }
    finish(problem, lambda, steps)
}

fn finish(
    problem: &DiscreteAlignmentProblem,
    lambda: f64,
    iterations: usize,
) -> Result<OptimalPolicySolution> {
    if problem.q_values.len() == 1 {
        return Ok(OptimalPolicySolution {
            policy: FiniteDistribution::new(vec![1.0])?,
            lambda,
            residual: 0.0,
        });
    }
    let mut weights = Vec::with_capacity(problem.q_values.len());
    for (&q, &p) in problem.q_values.iter().zip(problem.pi_ref.iter()) {
        let x = problem
            .divergence
            .f_prime_inverse((q - lambda) / problem.beta)?;
        weights.push(p * x);
    }
    let residual = (weights.iter().sum::<f64>() - 1.0).abs();
    if !(residual <= RESIDUAL_TOL) || weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::Convergence {
            iterations,
            residual,
        });
    }
    Ok(OptimalPolicySolution {
        policy: FiniteDistribution::new(weights)?,
        lambda,
        residual,
    })
}

/// `β f'(p_θ/p_ref)`, the reward implied by a policy ratio (additive constant fixed to 0).
pub fn reward_reparameterize(cfg: &LossConfig, p_theta: f64, p_ref: f64) -> Result<f64> {
    for p in [p_theta, p_ref] {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::Domain { value: p });
        }
    }
    Ok(cfg.beta * cfg.divergence.f_prime(p_theta / p_ref)?)
}

/// `Q(a) = β f'(π(a)/π_ref(a)) + λ` for every action.
pub fn recover_q_from_policy(
    policy: &FiniteDistribution,
    pi_ref: &FiniteDistribution,
    beta: f64,
    divergence: Divergence,
    lambda: f64,
) -> Result<Vec<f64>> {
    if policy.len() != pi_ref.len() {
        return Err(Error::Shape(format!(
            "policy has {} actions, reference has {}",
            policy.len(),
            pi_ref.len()
        )));
    }
    let cfg = LossConfig::new(divergence, beta)?;
    policy
        .iter()
        .zip(pi_ref.iter())
        .map(|(&p, &r)| Ok(reward_reparameterize(&cfg, p, r)? + lambda))
        .collect()
}

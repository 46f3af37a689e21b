//! Numerical evidence sweeps over the loss and policy modules.

use std::path::PathBuf;

use anyhow::Result;
use fdiv_align::divergence::FiniteDistribution;
use fdiv_align::loss::{
    closed_form_gradients, generalized_loss, loss_gradients, verify_ratio_ordering, GradientPair,
    LossConfig, RatioPair,
};
use fdiv_align::numeric::{central_difference, log_space, relative_error};
use fdiv_align::policy::{recover_q_from_policy, solve_optimal_policy, DiscreteAlignmentProblem};
use fdiv_align::Divergence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::output::{line, num, Outputs};
use crate::{CommandConfig, ConfigError, VerificationFailure};

pub const EVIDENCE_HEADER: &str = "suite,case,divergence,beta,x1,x2,error,tolerance,pass";
const ERROR_FLOOR: f64 = 1e-300;

/// Deliberate defects used to check that the suites can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Scales `f''` (and so the analytic gradient) by `1 + 1e-3`.
    Curvature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub out: PathBuf,
    pub seed: u64,
    pub alpha: f64,
    pub betas: Vec<f64>,
    pub grid_range: [f64; 2],
    pub grid_points: usize,
    pub fd_tol: f64,
    pub closed_form_tol: f64,
    pub ordering_samples: usize,
    pub ordering_max: f64,
    pub round_trip_problems: usize,
    pub round_trip_tol: f64,
    pub fault: Option<Fault>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out/verify"),
            seed: 0,
            alpha: 0.5,
            betas: vec![0.1, 1.0, 10.0],
            grid_range: [0.05, 20.0],
            grid_points: 20,
            fd_tol: 1e-5,
            closed_form_tol: 1e-9,
            ordering_samples: 1000,
            ordering_max: 50.0,
            round_trip_problems: 500,
            round_trip_tol: 1e-7,
            fault: None,
        }
    }
}

impl CommandConfig for VerifyConfig {
    fn out(&mut self) -> &mut PathBuf {
        &mut self.out
    }

    fn seed(&mut self) -> &mut u64 {
        &mut self.seed
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.grid_points < 2 {
            return Err(ConfigError(format!(
                "grid_points = {} leaves an empty grid; at least 2 are needed",
                self.grid_points
            )));
        }
        let [lo, hi] = self.grid_range;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(ConfigError(format!(
                "grid_range [{lo}, {hi}] must satisfy 0 < lo < hi"
            )));
        }
        if self.betas.is_empty() || self.betas.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(ConfigError(format!(
                "betas {:?} must be a non-empty list of positive values",
                self.betas
            )));
        }
        Divergence::alpha(self.alpha).map_err(|e| ConfigError(e.to_string()))?;
        if !(self.ordering_max > 0.0 && self.ordering_max.is_finite()) {
            return Err(ConfigError(format!(
                "ordering_max {} must be positive",
                self.ordering_max
            )));
        }
        for (name, tol) in [
            ("fd_tol", self.fd_tol),
            ("closed_form_tol", self.closed_form_tol),
            ("round_trip_tol", self.round_trip_tol),
        ] {
            if !(tol > 0.0) {
                return Err(ConfigError(format!("{name} {tol} must be positive")));
            }
        }
        Ok(())
    }
}

/// One row of the evidence table.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub case: usize,
    pub divergence: String,
    pub beta: Option<f64>,
    pub x1: Option<f64>,
    pub x2: Option<f64>,
    pub error: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }

    fn fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        vec![
            self.suite.to_string(),
            self.case.to_string(),
            self.divergence.clone(),
            opt(self.beta),
            opt(self.x1),
            opt(self.x2),
            num(self.error),
            num(self.tolerance),
            self.passed().to_string(),
        ]
    }
}

fn analytic(cfg: &LossConfig, pair: &RatioPair, fault: Option<Fault>) -> GradientPair {
    let g = loss_gradients(cfg, pair);
    match fault {
        Some(Fault::Curvature) => GradientPair {
            d_x1: g.d_x1 * (1.0 + 1e-3),
            d_x2: g.d_x2 * (1.0 + 1e-3),
        },
        None => g,
    }
}

fn divergences(cfg: &VerifyConfig) -> Vec<Divergence> {
    Divergence::family(cfg.alpha)
        .expect("alpha validated")
        .to_vec()
}

/// Analytic gradients against central differences with step `1e-6 X`.
pub fn gradient_suite(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let axis = log_space(cfg.grid_range[0], cfg.grid_range[1], cfg.grid_points);
    let mut checks = Vec::new();
    for d in divergences(cfg) {
        for &beta in &cfg.betas {
            let lc = LossConfig::new(d, beta)?;
            for &x1 in &axis {
                for &x2 in &axis {
                    let g = analytic(&lc, &RatioPair::new(x1, x2)?, cfg.fault);
                    let loss = |a: f64, b: f64| {
                        RatioPair::new(a, b)
                            .map(|p| generalized_loss(&lc, &p))
                            .unwrap_or(f64::NAN)
                    };
                    let fd1 = central_difference(|t| loss(t, x2), x1, 1e-6 * x1);
                    let fd2 = central_difference(|t| loss(x1, t), x2, 1e-6 * x2);
                    let error = relative_error(g.d_x1, fd1, ERROR_FLOOR).max(relative_error(
                        g.d_x2,
                        fd2,
                        ERROR_FLOOR,
                    ));
                    checks.push(Check {
                        suite: "gradient",
                        case: checks.len(),
                        divergence: d.to_string(),
                        beta: Some(beta),
                        x1: Some(x1),
                        x2: Some(x2),
                        error: if error.is_nan() { f64::INFINITY } else { error },
                        tolerance: cfg.fd_tol,
                    });
                }
            }
        }
    }
    Ok(checks)
}

/// Closed-form gradients against the generic expression.
pub fn closed_form_suite(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let axis = log_space(cfg.grid_range[0], cfg.grid_range[1], cfg.grid_points);
    let mut checks = Vec::new();
    for d in divergences(cfg) {
        for &beta in &cfg.betas {
            let lc = LossConfig::new(d, beta)?;
            for &x1 in &axis {
                for &x2 in &axis {
                    let pair = RatioPair::new(x1, x2)?;
                    let g = analytic(&lc, &pair, cfg.fault);
                    let error =
                        match closed_form_gradients(&lc, &pair) {
                            Ok(h) => relative_error(g.d_x1, h.d_x1, ERROR_FLOOR)
                                .max(relative_error(g.d_x2, h.d_x2, ERROR_FLOOR)),
                            Err(_) => f64::INFINITY,
                        };
                    checks.push(Check {
                        suite: "closed-form",
                        case: checks.len(),
                        divergence: d.to_string(),
                        beta: Some(beta),
                        x1: Some(x1),
                        x2: Some(x2),
                        error,
                        tolerance: cfg.closed_form_tol,
                    });
                }
            }
        }
    }
    Ok(checks)
}

/// Strict gradient-ratio chains at random `0 < X₂ < X₁ < max`.
pub fn ordering_suite(cfg: &VerifyConfig) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut checks = Vec::with_capacity(cfg.ordering_samples);
    while checks.len() < cfg.ordering_samples {
        let a: f64 = rng.random_range(0.0..cfg.ordering_max);
        let b: f64 = rng.random_range(0.0..cfg.ordering_max);
        let (x1, x2) = (a.max(b), a.min(b));
        if !(x2 > 0.0 && x1 > x2) {
            continue;
        }
        let error = if verify_ratio_ordering(x1, x2).is_ok() {
            0.0
        } else {
            1.0
        };
        checks.push(Check {
            suite: "ordering",
            case: checks.len(),
            divergence: "all".into(),
            beta: None,
            x1: Some(x1),
            x2: Some(x2),
            error,
            tolerance: 0.0,
        });
    }
    checks
}

/// Random single-state problems solved and mapped back to Q values.
pub fn round_trip_suite(cfg: &VerifyConfig) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let kinds = divergences(cfg);
    let betas = [0.5, 1.0, 10.0];
    (0..cfg.round_trip_problems)
        .map(|case| {
            let d = kinds[case % kinds.len()];
            let beta = betas[(case / kinds.len()) % betas.len()];
            let n = rng.random_range(2..=16);
            let q: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            let error = round_trip_error(&q, &w, beta, d).unwrap_or(f64::INFINITY);
            Check {
                suite: "round-trip",
                case,
                divergence: d.to_string(),
                beta: Some(beta),
                x1: None,
                x2: None,
                error,
                tolerance: cfg.round_trip_tol,
            }
        })
        .collect()
}

fn round_trip_error(q: &[f64], weights: &[f64], beta: f64, d: Divergence) -> Result<f64> {
    let pi_ref = FiniteDistribution::from_weights(weights)?;
    let problem = DiscreteAlignmentProblem::new(q.to_vec(), pi_ref.clone(), beta, d)?;
    let sol = solve_optimal_policy(&problem)?;
    let back = recover_q_from_policy(&sol.policy, &pi_ref, beta, d, 0.0)?;
    let shift = back.iter().zip(q).map(|(b, q)| b - q).sum::<f64>() / q.len() as f64;
    Ok(back
        .iter()
        .zip(q)
        .map(|(b, q)| (b - q - shift).abs())
        .fold(0.0, f64::max))
}

pub fn run(cfg: VerifyConfig) -> Result<String> {
    let mut outputs = Outputs::prepare(&cfg.out)?;
    let mut checks = gradient_suite(&cfg)?;
    checks.extend(closed_form_suite(&cfg)?);
    checks.extend(ordering_suite(&cfg));
    checks.extend(round_trip_suite(&cfg));

    let mut csv = format!("{EVIDENCE_HEADER}\n");
    for c in &checks {
        line(&mut csv, &c.fields());
    }
    outputs.add("evidence.csv", csv);
    let failed = checks.iter().filter(|c| !c.passed()).count();
    let written = outputs.finish(&cfg)?;
    if let Some(first) = checks.iter().find(|c| !c.passed()) {
        return Err(VerificationFailure(format!(
            "{failed} of {} checks failed; first: {}",
            checks.len(),
            first.fields().join(",")
        ))
        .into());
    }
    Ok(format!(
        "{} checks passed\n{}",
        checks.len(),
        crate::output::summary(&written)
    ))
}

use std::path::PathBuf;

use anyhow::Result;
use fdiv_align::divergence::FiniteDistribution;
use fdiv_align::policy::{recover_q_from_policy, solve_optimal_policy, DiscreteAlignmentProblem};
use fdiv_align::Divergence;
use serde::{Deserialize, Serialize};

use crate::output::{summary, Outputs};
use crate::{CommandConfig, ConfigError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySolveConfig {
    pub out: PathBuf,
    pub seed: u64,
    pub divergence: Divergence,
    pub beta: f64,
    pub q_values: Vec<f64>,
    /// Reference weights; normalized before solving.
    pub pi_ref: Vec<f64>,
}

impl Default for PolicySolveConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out/policy-solve"),
            seed: 0,
            divergence: Divergence::JensenShannon,
            beta: 1.0,
            q_values: vec![1.0, 0.0],
            pi_ref: vec![0.5, 0.5],
        }
    }
}

impl CommandConfig for PolicySolveConfig {
    fn out(&mut self) -> &mut PathBuf {
        &mut self.out
    }

    fn seed(&mut self) -> &mut u64 {
        &mut self.seed
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.q_values.is_empty() {
            return Err(ConfigError("q_values is empty".into()));
        }
        if self.q_values.len() != self.pi_ref.len() {
            return Err(ConfigError(format!(
                "{} Q values but {} reference weights",
                self.q_values.len(),
                self.pi_ref.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionReport {
    pub divergence: Divergence,
    pub beta: f64,
    pub policy: Vec<f64>,
    pub lambda: f64,
    pub residual: f64,
    pub objective: f64,
    /// `β f'(π/π_ref) + λ`, equal to the input Q values.
    pub recovered_q: Vec<f64>,
}

pub fn solve(cfg: &PolicySolveConfig) -> fdiv_align::Result<SolutionReport> {
    let pi_ref = FiniteDistribution::from_weights(&cfg.pi_ref)?;
    let problem = DiscreteAlignmentProblem::new(
        cfg.q_values.clone(),
        pi_ref.clone(),
        cfg.beta,
        cfg.divergence,
    )?;
    let sol = solve_optimal_policy(&problem)?;
    Ok(SolutionReport {
        divergence: cfg.divergence,
        beta: cfg.beta,
        policy: sol.policy.as_slice().to_vec(),
        lambda: sol.lambda,
        residual: sol.residual,
        objective: problem.objective(&sol.policy)?,
        recovered_q: recover_q_from_policy(
            &sol.policy,
            &pi_ref,
            cfg.beta,
            cfg.divergence,
            sol.lambda,
        )?,
    })
}

pub fn run(cfg: PolicySolveConfig) -> Result<String> {
    let mut outputs = Outputs::prepare(&cfg.out)?;
    let report = solve(&cfg)?;
    outputs.add_json("solution.json", &report)?;
    let policy: Vec<String> = report.policy.iter().map(|p| format!("{p:.6}")).collect();
    Ok(format!(
        "policy [{}], lambda {}\n{}",
        policy.join(", "),
        report.lambda,
        summary(&outputs.finish(&cfg)?)
    ))
}

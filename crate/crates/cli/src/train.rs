//! Training runs, one per listed divergence, with a comparison table.

use std::collections::HashSet;
use std::path::PathBuf;

use anyhow::{Context, Result};
use fdiv_align::diffusion::{
    ring_dataset, sample_final, Condition, GaussianStepPolicy, NoiseSchedule, Sample2D,
};
use fdiv_align::loss::LossConfig;
use fdiv_align::metrics::{entropy_1d, entropy_2d, rasterize, sample_diversity, SampleSet};
use fdiv_align::trainer::{
    pretrain_reference, synthetic_preferences, train_categorical, train_stepwise,
    CategoricalPolicy, PreferenceOracle, PretrainConfig, StepObjective, StepwiseConfig, TrainTrace,
    COVERAGE_RADIUS,
};
use fdiv_align::Divergence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::output::{file_stem, line, num, summary, Outputs};
use crate::{check_exists, CommandConfig, ConfigError};

pub const COMPARISON_HEADER: &str = "divergence,final_score,mode_coverage,entropy_1d";
const SAMPLE_SEED_SALT: u64 = 0xf2e5_4a11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    Categorical,
    Stepwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CategoricalSettings {
    pub beta: f64,
    pub epochs: usize,
    pub lr: f64,
    pub conditions: usize,
    pub outcomes: usize,
    pub records: usize,
}

impl Default for CategoricalSettings {
    fn default() -> Self {
        Self {
            beta: 1.0,
            epochs: 200,
            lr: 1.0,
            conditions: 4,
            outcomes: 6,
            records: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepwiseSettings {
    pub beta: f64,
    pub epochs: usize,
    pub lr: f64,
    pub objective: StepObjective,
    pub steps: usize,
    /// Size of the condition vocabulary.
    pub conditions: usize,
    /// Conditions whose preferences are trained on.
    pub train_conditions: Vec<usize>,
    pub k: usize,
    pub pairs_per_epoch: usize,
    pub batch_size: usize,
    pub eval_samples: usize,
    pub gradient_check: bool,
    pub dataset_size: usize,
    pub pretrain: PretrainConfig,
    /// Saved reference policy; pre-training is skipped when set.
    pub reference: Option<PathBuf>,
}

impl Default for StepwiseSettings {
    fn default() -> Self {
        let base =
            StepwiseConfig::new(LossConfig::new(Divergence::ReverseKl, 10.0).expect("valid beta"));
        Self {
            beta: base.loss.beta,
            epochs: base.epochs,
            lr: base.lr,
            objective: base.objective,
            steps: 50,
            conditions: 4,
            train_conditions: base.conditions,
            k: base.k,
            pairs_per_epoch: base.pairs_per_epoch,
            batch_size: base.batch_size,
            eval_samples: base.eval_samples,
            gradient_check: base.gradient_check,
            dataset_size: 4096,
            pretrain: PretrainConfig::default(),
            reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub out: PathBuf,
    pub seed: u64,
    pub mode: TrainMode,
    pub divergences: Vec<Divergence>,
    /// Fresh samples drawn per condition after training.
    pub samples: usize,
    pub raster_grid: usize,
    pub raster_extent: f64,
    pub categorical: CategoricalSettings,
    pub stepwise: StepwiseSettings,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out/train"),
            seed: 0,
            mode: TrainMode::Categorical,
            divergences: vec![Divergence::ReverseKl],
            samples: 500,
            raster_grid: 64,
            raster_extent: 3.0,
            categorical: CategoricalSettings::default(),
            stepwise: StepwiseSettings::default(),
        }
    }
}

impl CommandConfig for TrainConfig {
    fn out(&mut self) -> &mut PathBuf {
        &mut self.out
    }

    fn seed(&mut self) -> &mut u64 {
        &mut self.seed
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.divergences.is_empty() {
            return Err(ConfigError("no divergences listed".into()));
        }
        let stems: HashSet<String> = self.divergences.iter().map(file_stem).collect();
        if stems.len() != self.divergences.len() {
            return Err(ConfigError("divergences are listed twice".into()));
        }
        if self.samples == 0 {
            return Err(ConfigError("samples must be positive".into()));
        }
        let c = &self.categorical;
        if c.conditions == 0 || c.outcomes < 2 || c.records == 0 {
            return Err(ConfigError(format!(
                "categorical run needs conditions >= 1, outcomes >= 2 and records >= 1, got {}, {}, {}",
                c.conditions, c.outcomes, c.records
            )));
        }
        let s = &self.stepwise;
        if s.steps == 0 || s.conditions == 0 || s.dataset_size == 0 {
            return Err(ConfigError(
                "stepwise steps, conditions and dataset_size must be positive".into(),
            ));
        }
        if let Some(&bad) = s.train_conditions.iter().find(|&&t| t >= s.conditions) {
            return Err(ConfigError(format!(
                "train condition {bad} is outside the {} conditions",
                s.conditions
            )));
        }
        for (name, beta) in [("categorical", c.beta), ("stepwise", s.beta)] {
            LossConfig::new(Divergence::ReverseKl, beta)
                .map_err(|e| ConfigError(format!("{name}: {e}")))?;
        }
        Ok(())
    }
}

/// One row of the comparison table plus the reference score for step-wise runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub divergence: Divergence,
    pub final_score: f64,
    pub reference_score: Option<f64>,
    pub mode_coverage: f64,
    pub mean_pairwise_distance: f64,
    pub entropy_1d: f64,
    pub entropy_2d: Option<f64>,
}

fn shannon_bits(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum()
}

fn run_categorical(cfg: &TrainConfig, d: Divergence, outputs: &mut Outputs) -> Result<RunReport> {
    let c = &cfg.categorical;
    let (reference, data) = synthetic_preferences(c.conditions, c.outcomes, c.records, cfg.seed)?;
    let loss = LossConfig::new(d, c.beta)?;
    let (policy, trace) = train_categorical(&reference, &reference, &data, &loss, c.epochs, c.lr)
        .with_context(|| format!("categorical training with {d}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SAMPLE_SEED_SALT);
    let mut csv = String::from("condition,outcome\n");
    let mut counts = vec![0usize; c.outcomes];
    for cond in 0..c.conditions {
        let p = policy.probabilities(Condition(cond))?;
        for _ in 0..cfg.samples {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut k = c.outcomes - 1;
            for (i, pi) in p.iter().enumerate() {
                acc += pi;
                if u < acc {
                    k = i;
                    break;
                }
            }
            counts[k] += 1;
            line(&mut csv, &[cond.to_string(), k.to_string()]);
        }
    }
    let last = trace.last().copied().context("empty trace")?;
    let report = RunReport {
        divergence: d,
        final_score: last.score,
        reference_score: None,
        mode_coverage: last.mode_coverage,
        mean_pairwise_distance: last.pairwise_distance,
        entropy_1d: shannon_bits(&counts),
        entropy_2d: None,
    };
    write_run(
        outputs,
        d,
        &trace,
        &categorical_json(&policy)?,
        csv,
        &report,
    )?;
    Ok(report)
}

fn categorical_json(policy: &CategoricalPolicy) -> Result<String> {
    Ok(serde_json::to_string_pretty(policy)? + "\n")
}

fn write_run(
    outputs: &mut Outputs,
    d: Divergence,
    trace: &TrainTrace,
    policy_json: &str,
    samples_csv: String,
    report: &RunReport,
) -> Result<()> {
    let stem = file_stem(&d);
    outputs.add(format!("{stem}/trace.csv"), trace.to_csv());
    outputs.add(format!("{stem}/policy.json"), policy_json.to_string());
    outputs.add(format!("{stem}/samples.csv"), samples_csv);
    outputs.add_json(&format!("{stem}/report.json"), report)
}

/// Pre-trained (or loaded) reference for step-wise runs.
pub fn stepwise_reference(cfg: &TrainConfig) -> Result<GaussianStepPolicy> {
    let s = &cfg.stepwise;
    if let Some(path) = &s.reference {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading reference {}", path.display()))?;
        let policy = GaussianStepPolicy::from_json(&text)
            .with_context(|| format!("parsing reference {}", path.display()))?;
        if policy.steps() != s.steps || policy.conditions() != s.conditions {
            return Err(ConfigError(format!(
                "reference has {} steps and {} conditions, config asks for {} and {}",
                policy.steps(),
                policy.conditions(),
                s.steps,
                s.conditions
            ))
            .into());
        }
        return Ok(policy);
    }
    let schedule = NoiseSchedule::scaled_linear(s.steps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let data = ring_dataset(s.dataset_size, s.conditions, &mut rng);
    let pretrain = PretrainConfig {
        seed: cfg.seed,
        ..s.pretrain.clone()
    };
    Ok(pretrain_reference(
        &schedule,
        &data,
        s.conditions,
        &pretrain,
    )?)
}

pub fn stepwise_config(cfg: &TrainConfig, d: Divergence) -> Result<StepwiseConfig> {
    let s = &cfg.stepwise;
    let mut sc = StepwiseConfig::new(LossConfig::new(d, s.beta)?);
    sc.objective = s.objective;
    sc.epochs = s.epochs;
    sc.lr = s.lr;
    sc.k = s.k;
    sc.pairs_per_epoch = s.pairs_per_epoch;
    sc.batch_size = s.batch_size;
    sc.conditions = s.train_conditions.clone();
    sc.eval_samples = s.eval_samples;
    sc.seed = cfg.seed;
    sc.gradient_check = s.gradient_check;
    Ok(sc)
}

/// Mean oracle score, coverage, distance and raster entropies of fresh samples.
pub struct SampleSummary {
    pub csv: String,
    pub score: f64,
    pub coverage: f64,
    pub distance: f64,
    pub entropy_1d: f64,
    pub entropy_2d: f64,
}

pub fn summarize_samples(
    cfg: &TrainConfig,
    policy: &GaussianStepPolicy,
    oracle: &PreferenceOracle,
) -> Result<SampleSummary> {
    let conds = &cfg.stepwise.train_conditions;
    let mut out = SampleSummary {
        csv: String::from("x,y,condition\n"),
        score: 0.0,
        coverage: 0.0,
        distance: 0.0,
        entropy_1d: 0.0,
        entropy_2d: 0.0,
    };
    for &c in conds {
        let samples: Vec<Sample2D> = sample_final(
            policy,
            Condition(c),
            cfg.samples,
            cfg.seed ^ SAMPLE_SEED_SALT,
        )?;
        for s in &samples {
            out.score += oracle.score(*s, Condition(c))?;
            line(&mut out.csv, &[num(s.x), num(s.y), c.to_string()]);
        }
        let set = SampleSet::new(samples, Condition(c))?;
        let div = sample_diversity(&set, oracle.modes(), COVERAGE_RADIUS);
        out.coverage += div.mode_coverage as f64;
        out.distance += div.mean_pairwise_distance;
        let img = rasterize(&set, cfg.raster_grid, cfg.raster_extent)?;
        out.entropy_1d += entropy_1d(&img);
        out.entropy_2d += entropy_2d(&img, fdiv_align::metrics::DEFAULT_NEIGHBORHOOD)?;
    }
    let m = conds.len() as f64;
    out.score /= m * cfg.samples as f64;
    out.coverage /= m;
    out.distance /= m;
    out.entropy_1d /= m;
    out.entropy_2d /= m;
    Ok(out)
}

fn run_stepwise(
    cfg: &TrainConfig,
    d: Divergence,
    reference: &GaussianStepPolicy,
    reference_score: f64,
    outputs: &mut Outputs,
) -> Result<RunReport> {
    let oracle = PreferenceOracle::ring(cfg.stepwise.conditions);
    let sc = stepwise_config(cfg, d)?;
    let (policy, trace) = train_stepwise(reference, reference, &oracle, &sc)
        .with_context(|| format!("step-wise training with {d}"))?;
    let fresh = summarize_samples(cfg, &policy, &oracle)?;
    let report = RunReport {
        divergence: d,
        final_score: fresh.score,
        reference_score: Some(reference_score),
        mode_coverage: fresh.coverage,
        mean_pairwise_distance: fresh.distance,
        entropy_1d: fresh.entropy_1d,
        entropy_2d: Some(fresh.entropy_2d),
    };
    write_run(outputs, d, &trace, &policy.to_json(), fresh.csv, &report)?;
    Ok(report)
}

pub fn run(mut cfg: TrainConfig) -> Result<String> {
    cfg.stepwise.pretrain.seed = cfg.seed;
    if let Some(path) = &cfg.stepwise.reference {
        check_exists(path)?;
    }
    let mut outputs = Outputs::prepare(&cfg.out)?;
    let mut table = format!("{COMPARISON_HEADER}\n");
    let mut reports = Vec::with_capacity(cfg.divergences.len());
    match cfg.mode {
        TrainMode::Categorical => {
            for &d in &cfg.divergences {
                reports.push(run_categorical(&cfg, d, &mut outputs)?);
            }
        }
        TrainMode::Stepwise => {
            cfg.stepwise.train_conditions.first().ok_or_else(|| {
                ConfigError("stepwise run needs at least one train condition".into())
            })?;
            let reference = stepwise_reference(&cfg)?;
            let oracle = PreferenceOracle::ring(cfg.stepwise.conditions);
            let base = summarize_samples(&cfg, &reference, &oracle)?;
            outputs.add("reference.json", reference.to_json());
            for &d in &cfg.divergences {
                reports.push(run_stepwise(&cfg, d, &reference, base.score, &mut outputs)?);
            }
        }
    }
    for r in &reports {
        line(
            &mut table,
            &[
                r.divergence.to_string(),
                num(r.final_score),
                num(r.mode_coverage),
                num(r.entropy_1d),
            ],
        );
    }
    outputs.add("comparison.csv", table);
    Ok(summary(&outputs.finish(&cfg)?))
}

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mlp::{ForwardCache, Mlp};
use super::{Condition, NoiseSchedule, Sample2D};
use crate::error::{Error, Result};

pub const HIDDEN_WIDTH: usize = 64;
pub const POLICY_FORMAT_VERSION: u32 = 1;

/// Time features: `t/T` plus a 4-dimensional sinusoidal embedding.
const TIME_FEATURES: usize = 5;

/// Per-coordinate standard deviation of the ring data, used to precondition the network.
pub const DATA_STD: f64 = 1.417_744_687_875_782_4;

/// Per-step constants of a [`GaussianStepPolicy`], indexed by `t − 1`.
///
/// The mean is `μ = x0_coef·x̂₀ + xt_coef·x_t` and the network output `F` enters as
/// `x̂₀ = skip·x_t + out·F(input·x_t, …)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepCoefficients {
    pub x0_coef: Vec<f64>,
    pub xt_coef: Vec<f64>,
    pub skip: Vec<f64>,
    pub out: Vec<f64>,
    pub input: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl StepCoefficients {
    /// Posterior-mean coefficients and `σ_t` from `schedule`, with the
    /// skip/output/input scalings of the minimum-variance linear estimate of
    /// `x₀` for data of standard deviation `data_std`.
    pub fn from_schedule(schedule: &NoiseSchedule, data_std: f64) -> Self {
        let steps = 1..=schedule.steps();
        let var = data_std * data_std;
        let total = |t: usize| {
            let ab = schedule.alpha_bar(t);
            ab * var + 1.0 - ab
        };
        Self {
            x0_coef: steps.clone().map(|t| schedule.x0_coef(t)).collect(),
            xt_coef: steps.clone().map(|t| schedule.xt_coef(t)).collect(),
            skip: steps
                .clone()
                .map(|t| schedule.alpha_bar(t).sqrt() * var / total(t))
                .collect(),
            out: steps
                .clone()
                .map(|t| data_std * (1.0 - schedule.alpha_bar(t)).sqrt() / total(t).sqrt())
                .collect(),
            input: steps.map(|t| 1.0 / total(t).sqrt()).collect(),
            sigmas: schedule.step_sigmas(),
        }
    }

    fn validate(&self) -> Result<()> {
        let steps = self.sigmas.len();
        let lens = [
            self.x0_coef.len(),
            self.xt_coef.len(),
            self.skip.len(),
            self.out.len(),
            self.input.len(),
        ];
        if steps == 0 || lens.iter().any(|&l| l != steps) {
            return Err(Error::Shape("per-step coefficient lengths differ".into()));
        }
        if self.sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Parameter(
                "step standard deviations must be positive".into(),
            ));
        }
        let all = [
            &self.x0_coef,
            &self.xt_coef,
            &self.skip,
            &self.out,
            &self.input,
        ];
        if all.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::Parameter("step coefficients must be finite".into()));
        }
        Ok(())
    }
}

/// Reverse step `p_θ(x_{t−1} | x_t, c) = N(μ_θ(x_t, t, c), σ_t² I)`.
///
/// The network predicts `x̂₀(x_t, t, c)` and the mean is the matching
/// posterior mean `μ_θ = a_t x̂₀ + b_t x_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStepPolicy {
    net: Mlp,
    conditions: usize,
    coef: StepCoefficients,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    version: u32,
    conditions: usize,
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
    coefficients: StepCoefficients,
}

impl GaussianStepPolicy {
    /// Randomly initialized policy with two hidden layers of [`HIDDEN_WIDTH`] units.
    pub fn new(schedule: &NoiseSchedule, conditions: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = [
            2 + TIME_FEATURES + conditions,
            HIDDEN_WIDTH,
            HIDDEN_WIDTH,
            2,
        ];
        Self::with_network(Mlp::new(&sizes, &mut rng)?, schedule, conditions)
    }

    pub fn with_network(net: Mlp, schedule: &NoiseSchedule, conditions: usize) -> Result<Self> {
        Self::with_coefficients(
            net,
            conditions,
            StepCoefficients::from_schedule(schedule, DATA_STD),
        )
    }

    pub fn with_coefficients(net: Mlp, conditions: usize, coef: StepCoefficients) -> Result<Self> {
        if conditions == 0 {
            return Err(Error::Parameter("condition vocabulary is empty".into()));
        }
        if net.input_dim() != 2 + TIME_FEATURES + conditions || net.output_dim() != 2 {
            return Err(Error::Shape(format!(
                "network sizes {:?} do not fit {conditions} conditions",
                net.sizes()
            )));
        }
        coef.validate()?;
        Ok(Self {
            net,
            conditions,
            coef,
        })
    }

    pub fn steps(&self) -> usize {
        self.coef.sigmas.len()
    }

    pub fn coefficients(&self) -> &StepCoefficients {
        &self.coef
    }

    pub fn conditions(&self) -> usize {
        self.conditions
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.coef.sigmas[t - 1]
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn params(&self) -> &[f64] {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.net.params_mut()
    }

    pub fn param_count(&self) -> usize {
        self.net.params().len()
    }

    fn check(&self, t: usize, c: Condition) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::Index {
                index: t,
                max: self.steps(),
            });
        }
        Condition::checked(c.0, self.conditions).map(|_| ())
    }

    fn features(&self, xt: Sample2D, t: usize, c: Condition) -> Vec<f64> {
        let tau = t as f64 / self.steps() as f64;
        let mut v = Vec::with_capacity(self.net.input_dim());
        let scale = self.coef.input[t - 1];
        v.extend([
            scale * xt.x,
            scale * xt.y,
            tau,
            (PI * tau).sin(),
            (PI * tau).cos(),
            (8.0 * PI * tau).sin(),
            (8.0 * PI * tau).cos(),
        ]);
        v.extend((0..self.conditions).map(|k| if k == c.0 { 1.0 } else { 0.0 }));
        v
    }

    /// Network estimate of `x₀` given `x_t`.
    pub fn predict_x0(&self, xt: Sample2D, t: usize, c: Condition) -> Result<Sample2D> {
        self.check(t, c)?;
        let out = self.net.forward(&self.features(xt, t, c));
        Ok(self.combine(xt, t, &out))
    }

    /// Forward pass keeping intermediates for [`Self::backward_x0`].
    pub fn predict_x0_cached(
        &self,
        xt: Sample2D,
        t: usize,
        c: Condition,
    ) -> Result<(Sample2D, ForwardCache)> {
        self.check(t, c)?;
        let cache = self.net.forward_cached(&self.features(xt, t, c));
        let x0 = self.combine(xt, t, cache.output());
        Ok((x0, cache))
    }

    fn combine(&self, xt: Sample2D, t: usize, out: &[f64]) -> Sample2D {
        let k = self.coef.out[t - 1];
        xt.scale(self.coef.skip[t - 1])
            .add(Sample2D::new(k * out[0], k * out[1]))
    }

    /// Adds `scale · (∂x̂₀/∂θ)ᵀ d_x0` into `grad` for a cache taken at step `t`.
    pub fn backward_x0(
        &self,
        cache: &ForwardCache,
        t: usize,
        d_x0: Sample2D,
        scale: f64,
        grad: &mut [f64],
    ) {
        let k = self.coef.out[t - 1];
        self.net
            .backward(cache, &[k * d_x0.x, k * d_x0.y], scale, grad);
    }

    fn mean_from_x0(&self, x0: Sample2D, xt: Sample2D, t: usize) -> Sample2D {
        x0.scale(self.coef.x0_coef[t - 1])
            .add(xt.scale(self.coef.xt_coef[t - 1]))
    }

    /// `μ_θ(x_t, t, c)`.
    pub fn mean(&self, xt: Sample2D, t: usize, c: Condition) -> Result<Sample2D> {
        Ok(self.mean_from_x0(self.predict_x0(xt, t, c)?, xt, t))
    }

    /// `ln N(x_prev; μ_θ(x_t, t, c), σ_t² I)`.
    pub fn step_log_prob(
        &self,
        x_prev: Sample2D,
        xt: Sample2D,
        t: usize,
        c: Condition,
    ) -> Result<f64> {
        let mu = self.mean(xt, t, c)?;
        Ok(gaussian_log_density(x_prev, mu, self.sigma(t)))
    }

    /// Returns `ln p_θ(x_prev | x_t)` and adds `scale · ∂/∂θ` of it into `grad`.
    pub fn accumulate_log_prob_grad(
        &self,
        x_prev: Sample2D,
        xt: Sample2D,
        t: usize,
        c: Condition,
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        let (x0, cache) = self.predict_x0_cached(xt, t, c)?;
        let mu = self.mean_from_x0(x0, xt, t);
        let sigma = self.sigma(t);
        // ∂ ln p / ∂μ = (x_prev − μ)/σ², and ∂μ/∂x̂₀ = a_t.
        let d_mu = x_prev.sub(mu).scale(1.0 / (sigma * sigma));
        self.backward_x0(&cache, t, d_mu.scale(self.coef.x0_coef[t - 1]), scale, grad);
        Ok(gaussian_log_density(x_prev, mu, sigma))
    }

    /// One draw from `p_θ(· | x_t, c)`.
    pub fn sample_step(
        &self,
        xt: Sample2D,
        t: usize,
        c: Condition,
        rng: &mut impl Rng,
    ) -> Result<Sample2D> {
        let mu = self.mean(xt, t, c)?;
        Ok(mu.add(standard_normal(rng).scale(self.sigma(t))))
    }

    pub fn to_json(&self) -> String {
        let file = PolicyFile {
            version: POLICY_FORMAT_VERSION,
            conditions: self.conditions,
            layer_sizes: self.net.sizes().to_vec(),
            params: self.net.params().to_vec(),
            coefficients: self.coef.clone(),
        };
        serde_json::to_string_pretty(&file).expect("policy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PolicyFile =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("policy file: {e}")))?;
        if file.version != POLICY_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "policy file version {} is not supported",
                file.version
            )));
        }
        let net = Mlp::from_params(file.layer_sizes, file.params)?;
        Self::with_coefficients(net, file.conditions, file.coefficients)
    }
}

fn gaussian_log_density(x: Sample2D, mu: Sample2D, sigma: f64) -> f64 {
    -x.sub(mu).norm_sq() / (2.0 * sigma * sigma) - 2.0 * (sigma * TAU.sqrt()).ln()
}

pub(crate) fn standard_normal(rng: &mut impl Rng) -> Sample2D {
    let x: f64 = StandardNormal.sample(rng);
    let y: f64 = StandardNormal.sample(rng);
    Sample2D::new(x, y)
}

/// `p_θ(x_prev | x_t) / p_ref(x_prev | x_t)` for policies sharing `σ_t`.
pub fn step_ratio(
    theta: &GaussianStepPolicy,
    reference: &GaussianStepPolicy,
    x_prev: Sample2D,
    xt: Sample2D,
    t: usize,
    c: Condition,
) -> Result<f64> {
    Ok(step_log_ratio(theta, reference, x_prev, xt, t, c)?.exp())
}

/// `ln` of [`step_ratio`]: `(‖x_prev − μ_ref‖² − ‖x_prev − μ_θ‖²) / (2σ_t²)`.
pub fn step_log_ratio(
    theta: &GaussianStepPolicy,
    reference: &GaussianStepPolicy,
    x_prev: Sample2D,
    xt: Sample2D,
    t: usize,
    c: Condition,
) -> Result<f64> {
    check_shared_sigma(theta, reference, t)?;
    let mu_theta = theta.mean(xt, t, c)?;
    let mu_ref = reference.mean(xt, t, c)?;
    let sigma = theta.sigma(t);
    Ok((x_prev.sub(mu_ref).norm_sq() - x_prev.sub(mu_theta).norm_sq()) / (2.0 * sigma * sigma))
}

pub(crate) fn check_shared_sigma(
    theta: &GaussianStepPolicy,
    reference: &GaussianStepPolicy,
    t: usize,
) -> Result<()> {
    if theta.steps() != reference.steps() {
        return Err(Error::Config(format!(
            "policies have {} and {} steps",
            theta.steps(),
            reference.steps()
        )));
    }
    theta.check(t, Condition(0))?;
    if theta.sigma(t) != reference.sigma(t) {
        return Err(Error::Config(format!(
            "step {t} standard deviations differ: {} vs {}",
            theta.sigma(t),
            reference.sigma(t)
        )));
    }
    Ok(())
}

/// Reverse-chain states `x_T, …, x_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<Sample2D>,
}

impl Trajectory {
    pub fn from_states(states: Vec<Sample2D>) -> Self {
        Self { states }
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    /// `x_t` for `0 ≤ t ≤ T`.
    pub fn state(&self, t: usize) -> Sample2D {
        self.states[self.steps() - t]
    }

    pub fn final_sample(&self) -> Sample2D {
        *self.states.last().unwrap()
    }

    /// States in sampling order, `x_T` first.
    pub fn states(&self) -> &[Sample2D] {
        &self.states
    }
}

/// Draws `x_T ~ N(0, I)` and runs the reverse chain to `x_0`.
pub fn ancestral_sample(
    policy: &GaussianStepPolicy,
    c: Condition,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_chain(policy, c, &mut rng)
}

fn run_chain(policy: &GaussianStepPolicy, c: Condition, rng: &mut impl Rng) -> Result<Trajectory> {
    let steps = policy.steps();
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = standard_normal(rng);
    states.push(x);
    for t in (1..=steps).rev() {
        x = policy.sample_step(x, t, c, rng)?;
        states.push(x);
    }
    Ok(Trajectory { states })
}

/// Final samples `x_0` of `n` independent chains drawn from one seeded stream.
pub fn sample_final(
    policy: &GaussianStepPolicy,
    c: Condition,
    n: usize,
    seed: u64,
) -> Result<Vec<Sample2D>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| run_chain(policy, c, &mut rng).map(|tr| tr.final_sample()))
        .collect()
}

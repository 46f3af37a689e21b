//! Generalized pairwise preference loss and its gradient field.
//!
//! For a win ratio `X₁ = p_θ(x_w)/p_ref(x_w)` and a loss ratio
//! `X₂ = p_θ(x_l)/p_ref(x_l)` the loss is
//!
//! ```text
//! L_f(X₁, X₂) = −ln σ(β f'(X₁) − β f'(X₂))
//! ```
//!
//! and its partial derivatives are `∂L/∂X₁ = −β σ(−z) f''(X₁)` and
//! `∂L/∂X₂ = +β σ(−z) f''(X₂)` with `z = β(f'(X₁) − f'(X₂))`.

use serde::{Deserialize, Serialize};

use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::numeric::{log_add_exp, sigmoid, softplus};

/// Win/loss ratio pair, stored as natural logs so tiny probabilities survive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioPair {
    ln_x1: f64,
    ln_x2: f64,
}

impl RatioPair {
    pub fn new(x1: f64, x2: f64) -> Result<Self> {
        for x in [x1, x2] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::Domain { value: x });
            }
        }
        Ok(Self {
            ln_x1: x1.ln(),
            ln_x2: x2.ln(),
        })
    }

    /// Builds a pair from `ln X₁` and `ln X₂`.
    pub fn from_logs(ln_x1: f64, ln_x2: f64) -> Result<Self> {
        for u in [ln_x1, ln_x2] {
            if !u.is_finite() {
                return Err(Error::Domain { value: u.exp() });
            }
        }
        Ok(Self { ln_x1, ln_x2 })
    }

    pub fn x1(&self) -> f64 {
        self.ln_x1.exp()
    }

    pub fn x2(&self) -> f64 {
        self.ln_x2.exp()
    }

    pub fn ln_x1(&self) -> f64 {
        self.ln_x1
    }

    pub fn ln_x2(&self) -> f64 {
        self.ln_x2
    }
}

/// Divergence and penalty coefficient β.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub divergence: Divergence,
    pub beta: f64,
}

impl LossConfig {
    pub fn new(divergence: Divergence, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Parameter(format!(
                "beta must be positive, got {beta}"
            )));
        }
        Ok(Self { divergence, beta })
    }

    /// Same divergence with β multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.divergence, self.beta * factor)
    }

    /// `z = β (f'(X₁) − f'(X₂))`, the argument of the log-sigmoid.
    pub fn margin(&self, pair: &RatioPair) -> f64 {
        let d = &self.divergence;
        self.beta * (d.prime_of_log(pair.ln_x1) - d.prime_of_log(pair.ln_x2))
    }
}

/// `(∂L/∂X₁, ∂L/∂X₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientPair {
    pub d_x1: f64,
    pub d_x2: f64,
}

/// Loss together with its derivatives with respect to `ln X₁` and `ln X₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogGradient {
    pub loss: f64,
    pub d_ln_x1: f64,
    pub d_ln_x2: f64,
}

/// `−ln σ(β f'(X₁) − β f'(X₂))`.
pub fn generalized_loss(cfg: &LossConfig, pair: &RatioPair) -> f64 {
    softplus(-cfg.margin(pair))
}

/// Analytic partial derivatives of [`generalized_loss`].
pub fn loss_gradients(cfg: &LossConfig, pair: &RatioPair) -> GradientPair {
    let weight = cfg.beta * sigmoid(-cfg.margin(pair));
    let d = &cfg.divergence;
    GradientPair {
        d_x1: -weight * d.curvature_of_log(pair.ln_x1),
        d_x2: weight * d.curvature_of_log(pair.ln_x2),
    }
}

/// Loss and its gradient with respect to the log-ratios, `∂L/∂ln X = X ∂L/∂X`.
pub fn log_ratio_gradients(cfg: &LossConfig, pair: &RatioPair) -> LogGradient {
    let z = cfg.margin(pair);
    let weight = cfg.beta * sigmoid(-z);
    let d = &cfg.divergence;
    LogGradient {
        loss: softplus(-z),
        d_ln_x1: -weight * d.log_slope(pair.ln_x1),
        d_ln_x2: weight * d.log_slope(pair.ln_x2),
    }
}

/// `f''(X₁)/f''(X₂)`, equal to `|∂L/∂X₁ / ∂L/∂X₂|` and independent of β.
pub fn gradient_ratio(cfg: &LossConfig, pair: &RatioPair) -> f64 {
    let d = &cfg.divergence;
    let (u1, u2) = (pair.ln_x1, pair.ln_x2);
    let ln_ratio = match *d {
        Divergence::ReverseKl => u2 - u1,
        Divergence::ForwardKl => 2.0 * (u2 - u1),
        Divergence::Alpha(a) => (1.0 + a.get()) * (u2 - u1),
        Divergence::JensenShannon => u2 - u1 + softplus(u2) - softplus(u1),
    };
    ln_ratio.exp()
}

/// Per-divergence simplified gradient expressions, evaluated in log space.
///
/// Reverse KL:
/// `∂L/∂X₁ = −β X₂^β / (X₁ (X₁^β + X₂^β))`, `∂L/∂X₂ = β X₂^{β−1} / (X₁^β + X₂^β)`.
///
/// Jensen-Shannon, with `A = X₁^β (1+X₂)^β`, `B = X₂^β (1+X₁)^β`:
/// `∂L/∂X₁ = −β X₂^β (1+X₁)^{β−1} / (X₁ (A+B))`,
/// `∂L/∂X₂ = β X₂^{β−1} (1+X₁)^β / ((1+X₂)(A+B))`.
///
/// α-divergence, with `aᵢ = (β/α) Xᵢ^{−α}`:
/// `∂L/∂X₁ = −β X₁^{−(1+α)} e^{a₁} / (e^{a₁} + e^{a₂})`,
/// `∂L/∂X₂ = β X₂^{−(1+α)} e^{a₁} / (e^{a₁} + e^{a₂})`.
///
/// Forward KL, with `aᵢ = β/Xᵢ`:
/// `∂L/∂X₁ = −β X₁^{−2} e^{a₁} / (e^{a₁} + e^{a₂})`,
/// `∂L/∂X₂ = β X₂^{−2} e^{a₁} / (e^{a₁} + e^{a₂})`.
pub fn closed_form_gradients(cfg: &LossConfig, pair: &RatioPair) -> Result<GradientPair> {
    let b = cfg.beta;
    let ln_b = b.ln();
    let (u1, u2) = (pair.ln_x1, pair.ln_x2);
    let (ln_d1, ln_d2) = match cfg.divergence {
        Divergence::ReverseKl => {
            let den = log_add_exp(b * u1, b * u2);
            (ln_b + b * u2 - u1 - den, ln_b + (b - 1.0) * u2 - den)
        }
        Divergence::JensenShannon => {
            let (l1, l2) = (softplus(u1), softplus(u2));
            let den = log_add_exp(b * u1 + b * l2, b * u2 + b * l1);
            (
                ln_b + b * u2 + (b - 1.0) * l1 - u1 - den,
                ln_b + (b - 1.0) * u2 + b * l1 - l2 - den,
            )
        }
        Divergence::Alpha(a) => {
            let a = a.get();
            let a1 = b / a * (-a * u1).exp();
            let a2 = b / a * (-a * u2).exp();
            let share = a1 - log_add_exp(a1, a2);
            (ln_b - (1.0 + a) * u1 + share, ln_b - (1.0 + a) * u2 + share)
        }
        Divergence::ForwardKl => {
            let a1 = b * (-u1).exp();
            let a2 = b * (-u2).exp();
            let share = a1 - log_add_exp(a1, a2);
            (ln_b - 2.0 * u1 + share, ln_b - 2.0 * u2 + share)
        }
    };
    let d_x1 = -ln_d1.exp();
    let d_x2 = ln_d2.exp();
    if d_x1.is_finite() && d_x2.is_finite() && !ln_d1.is_nan() && !ln_d2.is_nan() {
        Ok(GradientPair { d_x1, d_x2 })
    } else {
        Err(Error::Overflow(format!(
            "closed-form gradient for {} at beta={b}, x1={}, x2={}",
            cfg.divergence,
            pair.x1(),
            pair.x2()
        )))
    }
}

/// One labelled gradient ratio `f''(X₁)/f''(X₂)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioEvidence {
    pub label: String,
    pub ratio: f64,
}

/// α values of the α-divergence chain.
pub const ORDERING_ALPHAS: [f64; 4] = [0.8, 0.6, 0.4, 0.2];

/// Checks, for `0 < X₂ < X₁`, the strict chains
///
/// ```text
/// 0 < FKL < JS < RKL < 1
/// 0 < FKL < α=0.8 < α=0.6 < α=0.4 < α=0.2 < RKL < 1
/// ```
///
/// on the gradient ratios, returning all seven ratios sorted ascending.
pub fn verify_ratio_ordering(x1: f64, x2: f64) -> Result<Vec<RatioEvidence>> {
    if !(x2 > 0.0 && x1 > x2 && x1.is_finite()) {
        return Err(Error::Precondition(format!(
            "ordering requires 0 < x2 < x1, got x1={x1}, x2={x2}"
        )));
    }
    let pair = RatioPair::new(x1, x2)?;
    let ratio =
        |d: Divergence| -> Result<f64> { Ok(gradient_ratio(&LossConfig::new(d, 1.0)?, &pair)) };
    let fkl = ratio(Divergence::ForwardKl)?;
    let js = ratio(Divergence::JensenShannon)?;
    let rkl = ratio(Divergence::ReverseKl)?;
    let mut alphas = Vec::with_capacity(ORDERING_ALPHAS.len());
    for a in ORDERING_ALPHAS {
        alphas.push((a, ratio(Divergence::alpha(a)?)?));
    }

    let mut evidence = vec![
        RatioEvidence {
            label: Divergence::ForwardKl.to_string(),
            ratio: fkl,
        },
        RatioEvidence {
            label: Divergence::JensenShannon.to_string(),
            ratio: js,
        },
        RatioEvidence {
            label: Divergence::ReverseKl.to_string(),
            ratio: rkl,
        },
    ];
    evidence.extend(alphas.iter().map(|&(a, r)| RatioEvidence {
        label: format!("alpha:{a}"),
        ratio: r,
    }));

    let first = [
        ("0", 0.0),
        ("forward-kl", fkl),
        ("js", js),
        ("reverse-kl", rkl),
        ("1", 1.0),
    ];
    let mut second = vec![("0".to_string(), 0.0), ("forward-kl".to_string(), fkl)];
    second.extend(alphas.iter().map(|&(a, r)| (format!("alpha:{a}"), r)));
    second.push(("reverse-kl".to_string(), rkl));
    second.push(("1".to_string(), 1.0));
    let first: Vec<(String, f64)> = first.iter().map(|(l, r)| (l.to_string(), *r)).collect();
    for chain in [&first, &second] {
        for w in chain.windows(2) {
            if !(w[0].1 < w[1].1) {
                return Err(Error::Ordering(format!(
                    "{} ratio {} is not below {} ratio {} at x1={x1}, x2={x2}",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
    }

    evidence.sort_by(|a, b| a.ratio.total_cmp(&b.ratio));
    Ok(evidence)
}

/// Bradley-Terry preference probability `σ(r_w − r_l)`.
pub fn sigma_bt_preference(r_w: f64, r_l: f64) -> f64 {
    sigmoid(r_w - r_l)
}

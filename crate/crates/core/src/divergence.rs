//! The f-divergence family used as the alignment penalty.
//!
//! Every member is generated by a convex `f` on `(0, ∞)` with `f(1) = 0`:
//!
//! | kind          | f(x)                                   | f'(x)              | f''(x)          |
//! |---------------|----------------------------------------|--------------------|-----------------|
//! | reverse KL    | x ln x                                 | ln x + 1           | 1/x             |
//! | forward KL    | −ln x                                  | −1/x               | 1/x²            |
//! | α (0 < α < 1) | (x^{1−α} − (1−α)x − α) / (α(α−1))      | (1 − x^{−α}) / α   | x^{−(α+1)}      |
//! | Jensen-Shannon| x ln(2x/(x+1)) + ln(2/(x+1))           | ln(2x/(1+x))       | 1/(x(1+x))      |
//!
//! Logarithms are natural throughout. The divergence between two finite
//! distributions is `D_f(p1‖p2) = Σ p2(i) f(p1(i)/p2(i))`, defined only when
//! `p1` is dominated by `p2`.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numeric::softplus;

/// Below this argument `f` is replaced by its analytic limit at `0⁺`.
const ZERO_LIMIT: f64 = 1e-300;

/// Tolerance on `Σ p = 1` for [`FiniteDistribution`].
pub const DISTRIBUTION_SUM_TOL: f64 = 1e-9;

/// Validated α parameter, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Alpha(f64);

impl Alpha {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 0.0 && alpha < 1.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::Parameter(format!(
                "alpha must lie in the open interval (0, 1), got {alpha}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// A member of the f-divergence family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Divergence {
    ReverseKl,
    ForwardKl,
    Alpha(Alpha),
    JensenShannon,
}

impl Divergence {
    /// Shorthand for an α-divergence; fails unless `0 < alpha < 1`.
    pub fn alpha(alpha: f64) -> Result<Self> {
        Alpha::new(alpha).map(Divergence::Alpha)
    }

    /// Reverse KL, forward KL, Jensen-Shannon and the α-divergence with the given α.
    pub fn family(alpha: f64) -> Result<[Divergence; 4]> {
        Ok([
            Divergence::ReverseKl,
            Divergence::ForwardKl,
            Divergence::JensenShannon,
            Divergence::alpha(alpha)?,
        ])
    }

    /// `f(x)`. Arguments below `1e-300` evaluate to the limit at `0⁺`.
    pub fn f(&self, x: f64) -> Result<f64> {
        check_positive(x)?;
        if x < ZERO_LIMIT {
            return self.f_at_zero();
        }
        let v = match *self {
            Divergence::ReverseKl => x * x.ln(),
            Divergence::ForwardKl => -x.ln(),
            Divergence::Alpha(Alpha(a)) => (x.powf(1.0 - a) - (1.0 - a) * x - a) / (a * (a - 1.0)),
            Divergence::JensenShannon => x * (2.0 * x / (x + 1.0)).ln() + (2.0 / (x + 1.0)).ln(),
        };
        finite(v, || format!("f({x}) for {self}"))
    }

    /// The limit `f(0⁺)`, used when `p1` puts no mass where `p2` does.
    pub fn f_at_zero(&self) -> Result<f64> {
        match *self {
            Divergence::ReverseKl => Ok(0.0),
            Divergence::ForwardKl => Err(Error::Overflow(
                "forward KL f(x) = -ln x diverges as x -> 0+".into(),
            )),
            Divergence::Alpha(Alpha(a)) => Ok(1.0 / (1.0 - a)),
            Divergence::JensenShannon => Ok(LN_2),
        }
    }

    /// `f'(x)`.
    pub fn f_prime(&self, x: f64) -> Result<f64> {
        check_positive(x)?;
        let v = match *self {
            Divergence::ReverseKl => x.ln() + 1.0,
            Divergence::ForwardKl => -1.0 / x,
            Divergence::Alpha(Alpha(a)) => (1.0 - x.powf(-a)) / a,
            Divergence::JensenShannon => (2.0 * x / (1.0 + x)).ln(),
        };
        finite(v, || format!("f'({x}) for {self}"))
    }

    /// `f''(x)`, strictly positive on the domain.
    pub fn f_double_prime(&self, x: f64) -> Result<f64> {
        check_positive(x)?;
        let v = match *self {
            Divergence::ReverseKl => 1.0 / x,
            Divergence::ForwardKl => 1.0 / (x * x),
            Divergence::Alpha(Alpha(a)) => x.powf(-(a + 1.0)),
            Divergence::JensenShannon => 1.0 / (x * (1.0 + x)),
        };
        finite(v, || format!("f''({x}) for {self}"))
    }

    /// Supremum of the range of `f'` (the range is `(-∞, sup)`).
    pub fn prime_supremum(&self) -> f64 {
        match *self {
            Divergence::ReverseKl => f64::INFINITY,
            Divergence::ForwardKl => 0.0,
            Divergence::Alpha(Alpha(a)) => 1.0 / a,
            Divergence::JensenShannon => LN_2,
        }
    }

    /// `(f')⁻¹(y)`, closed form for every kind.
    pub fn f_prime_inverse(&self, y: f64) -> Result<f64> {
        let sup = self.prime_supremum();
        if !y.is_finite() || y >= sup {
            return Err(Error::Range {
                value: y,
                divergence: self.to_string(),
                interval: format!("(-inf, {sup})"),
            });
        }
        let x = match *self {
            Divergence::ReverseKl => (y - 1.0).exp(),
            Divergence::ForwardKl => -1.0 / y,
            Divergence::Alpha(Alpha(a)) => (1.0 - a * y).powf(-1.0 / a),
            // e^y / (2 - e^y), with 2 - e^y = -2 expm1(y - ln 2) to keep precision near ln 2.
            Divergence::JensenShannon => y.exp() / (-2.0 * (y - LN_2).exp_m1()),
        };
        if x.is_finite() && x > 0.0 {
            Ok(x)
        } else {
            Err(Error::Overflow(format!("(f')^-1({y}) for {self} = {x}")))
        }
    }

    /// `D_f(p1 ‖ p2) = Σ p2(i) f(p1(i)/p2(i))`.
    pub fn value(&self, p1: &FiniteDistribution, p2: &FiniteDistribution) -> Result<f64> {
        if p1.len() != p2.len() {
            return Err(Error::Shape(format!(
                "distributions have lengths {} and {}",
                p1.len(),
                p2.len()
            )));
        }
        let mut total = 0.0;
        for (index, (&a, &b)) in p1.iter().zip(p2.iter()).enumerate() {
            if b == 0.0 {
                if a > 0.0 {
                    return Err(Error::Support { index, p1: a });
                }
                continue;
            }
            let ratio = a / b;
            let fx = if ratio == 0.0 {
                self.f_at_zero()?
            } else {
                self.f(ratio)?
            };
            total += b * fx;
        }
        // Roundoff can push an exact zero slightly negative.
        Ok(total.max(0.0))
    }

    /// `f'(e^u)`, finite for every finite `u`.
    pub(crate) fn prime_of_log(&self, u: f64) -> f64 {
        match *self {
            Divergence::ReverseKl => u + 1.0,
            Divergence::ForwardKl => -(-u).exp(),
            Divergence::Alpha(Alpha(a)) => -(-a * u).exp_m1() / a,
            Divergence::JensenShannon => LN_2 - softplus(-u),
        }
    }

    /// `f''(e^u)`.
    pub(crate) fn curvature_of_log(&self, u: f64) -> f64 {
        match *self {
            Divergence::ReverseKl => (-u).exp(),
            Divergence::ForwardKl => (-2.0 * u).exp(),
            Divergence::Alpha(Alpha(a)) => (-(1.0 + a) * u).exp(),
            Divergence::JensenShannon => (-u - softplus(u)).exp(),
        }
    }

    /// `x f''(x)` at `x = e^u`: the derivative of `f'(e^u)` with respect to `u`.
    pub(crate) fn log_slope(&self, u: f64) -> f64 {
        match *self {
            Divergence::ReverseKl => 1.0,
            Divergence::ForwardKl => (-u).exp(),
            Divergence::Alpha(Alpha(a)) => (-a * u).exp(),
            Divergence::JensenShannon => (-softplus(u)).exp(),
        }
    }
}

fn check_positive(x: f64) -> Result<()> {
    if x > 0.0 && !x.is_nan() {
        Ok(())
    } else {
        Err(Error::Domain { value: x })
    }
}

fn finite(v: f64, what: impl FnOnce() -> String) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Overflow(what()))
    }
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Divergence::ReverseKl => f.write_str("reverse-kl"),
            Divergence::ForwardKl => f.write_str("forward-kl"),
            Divergence::Alpha(a) => write!(f, "alpha:{}", a.get()),
            Divergence::JensenShannon => f.write_str("js"),
        }
    }
}

impl FromStr for Divergence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "reverse-kl" => Ok(Divergence::ReverseKl),
            "forward-kl" => Ok(Divergence::ForwardKl),
            "js" => Ok(Divergence::JensenShannon),
            other => {
                let value = other
                    .strip_prefix("alpha:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::ParseDivergence(s.to_string()))?;
                Divergence::alpha(value)
            }
        }
    }
}

impl Serialize for Divergence {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Divergence {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Probability vector over a finite set: non-negative entries summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FiniteDistribution(Vec<f64>);

impl FiniteDistribution {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::Distribution("empty probability vector".into()));
        }
        if let Some((i, p)) = probabilities
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::Distribution(format!(
                "entry {i} is {p}, expected a finite non-negative value"
            )));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_SUM_TOL {
            return Err(Error::Distribution(format!(
                "entries sum to {sum}, expected 1"
            )));
        }
        Ok(Self(probabilities))
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::Distribution(format!("weights sum to {sum}")));
        }
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Distribution("empty probability vector".into()));
        }
        Ok(Self(vec![1.0 / n as f64; n]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// Whether every index with zero mass here also has zero mass in `other`.
    pub fn dominates(&self, other: &FiniteDistribution) -> bool {
        self.len() == other.len()
            && self
                .iter()
                .zip(other.iter())
                .all(|(&mine, &theirs)| mine > 0.0 || theirs == 0.0)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.0.iter().all(|&p| p > 0.0)
    }
}

impl TryFrom<Vec<f64>> for FiniteDistribution {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FiniteDistribution> for Vec<f64> {
    fn from(d: FiniteDistribution) -> Self {
        d.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{central_difference, log_space, relative_error};
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn all() -> Vec<Divergence> {
        vec![
            Divergence::ReverseKl,
            Divergence::ForwardKl,
            Divergence::JensenShannon,
            Divergence::alpha(0.2).unwrap(),
            Divergence::alpha(0.5).unwrap(),
            Divergence::alpha(0.8).unwrap(),
        ]
    }

    #[test]
    fn f_vanishes_at_one() {
        for d in all() {
            assert!(d.f(1.0).unwrap().abs() <= 1e-12, "{d}");
        }
    }

    #[test]
    fn table_values() {
        assert_eq!(Divergence::ReverseKl.f(1.0).unwrap(), 0.0);
        assert_eq!(Divergence::JensenShannon.f(1.0).unwrap(), 0.0);
        assert!((Divergence::ReverseKl.f(E).unwrap() - E).abs() < 1e-15);

        assert_eq!(Divergence::ReverseKl.f_prime(1.0).unwrap(), 1.0);
        assert_eq!(Divergence::JensenShannon.f_prime(1.0).unwrap(), 0.0);
        let a = Divergence::alpha(0.5).unwrap();
        assert!((a.f_prime(4.0).unwrap() - 1.0).abs() < 1e-15);

        assert_eq!(Divergence::ReverseKl.f_double_prime(2.0).unwrap(), 0.5);
        assert_eq!(Divergence::ForwardKl.f_double_prime(2.0).unwrap(), 0.25);
        assert_eq!(Divergence::JensenShannon.f_double_prime(1.0).unwrap(), 0.5);

        assert_eq!(Divergence::ReverseKl.f_prime_inverse(1.0).unwrap(), 1.0);
        assert_eq!(Divergence::JensenShannon.f_prime_inverse(0.0).unwrap(), 1.0);
        assert_eq!(Divergence::ForwardKl.f_prime_inverse(-0.5).unwrap(), 2.0);
    }

    #[test]
    fn non_positive_arguments_are_domain_errors() {
        for d in all() {
            for x in [0.0, -1.0, f64::NAN] {
                assert!(matches!(d.f(x), Err(Error::Domain { .. })));
                assert!(matches!(d.f_prime(x), Err(Error::Domain { .. })));
                assert!(matches!(d.f_double_prime(x), Err(Error::Domain { .. })));
            }
        }
    }

    #[test]
    fn inverse_rejects_values_outside_range() {
        let cases = [
            (Divergence::ForwardKl, 0.0),
            (Divergence::ForwardKl, 3.0),
            (Divergence::JensenShannon, LN_2),
            (Divergence::alpha(0.5).unwrap(), 2.0),
        ];
        for (d, y) in cases {
            match d.f_prime_inverse(y) {
                Err(Error::Range { interval, .. }) => assert!(interval.starts_with("(-inf")),
                other => panic!("{d} at {y}: {other:?}"),
            }
        }
        assert!(Divergence::ReverseKl.f_prime_inverse(1e6).is_err());
    }

    #[test]
    fn tiny_arguments_return_analytic_limits() {
        assert_eq!(Divergence::ReverseKl.f(1e-310).unwrap(), 0.0);
        assert_eq!(Divergence::JensenShannon.f(1e-310).unwrap(), LN_2);
        assert!(matches!(
            Divergence::ForwardKl.f(1e-310),
            Err(Error::Overflow(_))
        ));
        let a = Divergence::alpha(0.25).unwrap();
        assert!((a.f(1e-310).unwrap() - 1.0 / 0.75).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_central_differences() {
        for d in all() {
            for x in log_space(1e-3, 1e3, 50) {
                let h = 1e-6 * x;
                let fd1 = central_difference(|t| d.f(t).unwrap(), x, h);
                let fd2 = central_difference(|t| d.f_prime(t).unwrap(), x, h);
                let e1 = relative_error(d.f_prime(x).unwrap(), fd1, 1e-300);
                let e2 = relative_error(d.f_double_prime(x).unwrap(), fd2, 1e-300);
                // f'(x) crosses zero at x = 1 for FKL/JS/α; fall back to an absolute check there.
                let abs1 = (d.f_prime(x).unwrap() - fd1).abs();
                assert!(e1 < 1e-6 || abs1 < 1e-8, "{d} f' at {x}: rel {e1}");
                assert!(e2 < 1e-6, "{d} f'' at {x}: rel {e2}");
            }
        }
    }

    #[test]
    fn log_space_helpers_agree_with_direct_forms() {
        for d in all() {
            for x in log_space(1e-3, 1e3, 37) {
                let u = x.ln();
                let p = d.f_prime(x).unwrap();
                let c = d.f_double_prime(x).unwrap();
                assert!(
                    (d.prime_of_log(u) - p).abs() <= 1e-12 * p.abs().max(1.0),
                    "{d} {x}"
                );
                assert!(relative_error(d.curvature_of_log(u), c, 1e-300) < 1e-12);
                assert!(relative_error(d.log_slope(u), x * c, 1e-300) < 1e-12);
            }
        }
    }

    #[test]
    fn inverse_round_trips_on_admissible_grid() {
        for d in all() {
            let sup = d.prime_supremum();
            let hi = if sup.is_finite() { sup - 1e-6 } else { 20.0 };
            for i in 0..=400 {
                let y = -30.0 + (hi + 30.0) * i as f64 / 400.0;
                let x = d.f_prime_inverse(y).unwrap();
                let back = d.f_prime(x).unwrap();
                assert!((back - y).abs() < 1e-9, "{d}: y={y} x={x} back={back}");
            }
        }
    }

    /// The α-family tends to reverse KL (α→0) and forward KL (α→1) up to the
    /// affine term ∓(x−1), which leaves every divergence value unchanged.
    #[test]
    fn alpha_limits_match_kl_up_to_affine_term() {
        let xs = log_space(0.1, 10.0, 41);
        let mut prev_rkl = f64::INFINITY;
        let mut prev_fkl = f64::INFINITY;
        for eps in [1e-2, 1e-3, 1e-4] {
            let near_r = Divergence::alpha(eps).unwrap();
            let near_f = Divergence::alpha(1.0 - eps).unwrap();
            let err_r = xs
                .iter()
                .map(|&x| {
                    let kl = Divergence::ReverseKl.f(x).unwrap() - (x - 1.0);
                    (near_r.f(x).unwrap() - kl).abs()
                })
                .fold(0.0, f64::max);
            let err_f = xs
                .iter()
                .map(|&x| {
                    let kl = Divergence::ForwardKl.f(x).unwrap() + (x - 1.0);
                    (near_f.f(x).unwrap() - kl).abs()
                })
                .fold(0.0, f64::max);
            // Error is first order in the distance to the endpoint.
            assert!(
                err_r < 40.0 * eps && err_f < 40.0 * eps,
                "{eps}: {err_r} {err_f}"
            );
            assert!(err_r < prev_rkl && err_f < prev_fkl);
            prev_rkl = err_r;
            prev_fkl = err_f;
        }
        assert!(prev_rkl < 1e-2 && prev_fkl < 1e-2);

        let p = FiniteDistribution::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let q = FiniteDistribution::new(vec![0.25, 0.25, 0.25, 0.25]).unwrap();
        let rkl = Divergence::ReverseKl.value(&p, &q).unwrap();
        let fkl = Divergence::ForwardKl.value(&p, &q).unwrap();
        let a0 = Divergence::alpha(0.01).unwrap().value(&p, &q).unwrap();
        let a1 = Divergence::alpha(0.99).unwrap().value(&p, &q).unwrap();
        assert!((a0 - rkl).abs() < 1e-2 && (a1 - fkl).abs() < 1e-2);
    }

    #[test]
    fn divergence_examples() {
        let p = FiniteDistribution::new(vec![0.5, 0.5]).unwrap();
        let q = FiniteDistribution::new(vec![0.25, 0.75]).unwrap();
        let v = Divergence::ReverseKl.value(&p, &q).unwrap();
        assert!((v - (0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln())).abs() < 1e-15);
        assert!((v - 0.143_841_036_225_890_2).abs() < 1e-12);
        for d in all() {
            assert!(d.value(&p, &p).unwrap() < 1e-14, "{d}");
        }
    }

    /// Brute-force evaluation of E_{p2}[f(p1/p2)] for JS between a point mass and
    /// the uniform law on two points: 0.5·f(2) + 0.5·f(0⁺).
    #[test]
    fn js_point_mass_against_uniform() {
        let point = FiniteDistribution::new(vec![1.0, 0.0]).unwrap();
        let uniform = FiniteDistribution::uniform(2).unwrap();
        let oracle = {
            let f2 = 2.0 * (4.0f64 / 3.0).ln() + (2.0f64 / 3.0).ln();
            0.5 * f2 + 0.5 * LN_2
        };
        let v = Divergence::JensenShannon.value(&point, &uniform).unwrap();
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 0.431_523_108_677_671_3).abs() < 1e-12);
        // Twice the textbook JS divergence between the two laws.
        let m = [0.75, 0.25];
        let kl = |a: &[f64]| -> f64 {
            a.iter()
                .zip(m.iter())
                .filter(|(x, _)| **x > 0.0)
                .map(|(x, y)| x * (x / y).ln())
                .sum()
        };
        let textbook = 0.5 * kl(&[1.0, 0.0]) + 0.5 * kl(&[0.5, 0.5]);
        assert!((v - 2.0 * textbook).abs() < 1e-14);
    }

    #[test]
    fn support_and_shape_errors() {
        let p = FiniteDistribution::new(vec![0.5, 0.5]).unwrap();
        let q = FiniteDistribution::new(vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            Divergence::ReverseKl.value(&p, &q),
            Err(Error::Support { index: 1, .. })
        ));
        let r = FiniteDistribution::uniform(3).unwrap();
        assert!(matches!(
            Divergence::ReverseKl.value(&p, &r),
            Err(Error::Shape(_))
        ));
        assert!(p.dominates(&q));
        assert!(!q.dominates(&p));
    }

    #[test]
    fn distribution_validation() {
        assert!(FiniteDistribution::new(vec![]).is_err());
        assert!(FiniteDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(FiniteDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(FiniteDistribution::new(vec![0.5, 0.5 + 5e-10]).is_ok());
        let d: FiniteDistribution = serde_json::from_str("[0.25, 0.75]").unwrap();
        assert_eq!(d.as_slice(), &[0.25, 0.75]);
        assert!(serde_json::from_str::<FiniteDistribution>("[0.25, 0.25]").is_err());
    }

    #[test]
    fn names_round_trip() {
        for d in all() {
            let parsed: Divergence = d.to_string().parse().unwrap();
            assert_eq!(parsed, d);
        }
        assert_eq!(
            "alpha:0.6".parse::<Divergence>().unwrap(),
            Divergence::alpha(0.6).unwrap()
        );
        for bad in ["alpha:0", "alpha:1", "alpha:x", "kl", ""] {
            assert!(bad.parse::<Divergence>().is_err(), "{bad}");
        }
        let json = serde_json::to_string(&Divergence::JensenShannon).unwrap();
        assert_eq!(json, "\"js\"");
    }

    fn distribution(n: usize) -> impl Strategy<Value = FiniteDistribution> {
        proptest::collection::vec(0.01f64..1.0, n)
            .prop_map(|w| FiniteDistribution::from_weights(&w).unwrap())
    }

    proptest! {
        #[test]
        fn divergence_is_non_negative(
            (p, q) in (2usize..8).prop_flat_map(|n| (distribution(n), distribution(n))),
            which in 0usize..6,
        ) {
            let d = all()[which];
            let v = d.value(&p, &q).unwrap();
            prop_assert!(v >= 0.0);
            let identical = p.iter().zip(q.iter()).all(|(a, b)| (a - b).abs() < 1e-12);
            if !identical {
                let gap = p.iter().zip(q.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if gap > 1e-3 {
                    prop_assert!(v > 1e-9, "{} gave {} for distinct inputs", d, v);
                }
            }
        }

        #[test]
        fn curvature_is_positive(x in 1e-6f64..1e6, which in 0usize..6) {
            prop_assert!(all()[which].f_double_prime(x).unwrap() > 0.0);
        }
    }
}

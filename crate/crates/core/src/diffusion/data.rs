use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Condition, Sample2D};

pub const RING_MODES: usize = 8;
pub const RING_RADIUS: f64 = 2.0;
pub const RING_SIGMA: f64 = 0.1;

/// Training point with the condition it was drawn under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionedSample {
    pub sample: Sample2D,
    pub condition: Condition,
}

/// Mode centres evenly spaced on a circle, the first at angle 0.
pub fn ring_modes(count: usize, radius: f64) -> Vec<Sample2D> {
    (0..count)
        .map(|k| {
            let angle = TAU * k as f64 / count as f64;
            Sample2D::new(radius * angle.cos(), radius * angle.sin())
        })
        .collect()
}

/// `n` draws from the equal-weight ring mixture, tagged with conditions in
/// round-robin order. Conditions carry no information about the data, so a
/// model fit to this set is the same unconditional mixture for every condition.
pub fn ring_dataset(n: usize, conditions: usize, rng: &mut impl Rng) -> Vec<ConditionedSample> {
    let modes = ring_modes(RING_MODES, RING_RADIUS);
    (0..n)
        .map(|i| {
            let centre = modes[rng.random_range(0..RING_MODES)];
            let dx: f64 = StandardNormal.sample(rng);
            let dy: f64 = StandardNormal.sample(rng);
            ConditionedSample {
                sample: centre.add(Sample2D::new(dx, dy).scale(RING_SIGMA)),
                condition: Condition(i % conditions.max(1)),
            }
        })
        .collect()
}

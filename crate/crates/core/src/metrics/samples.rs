use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::GrayImage;
use crate::diffusion::{Condition, Sample2D};
use crate::error::{Error, Result};

/// Above this many samples the pairwise distance is estimated on a subset.
pub const EXACT_PAIRWISE_LIMIT: usize = 2000;
const SUBSAMPLE_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    samples: Vec<Sample2D>,
    condition: Condition,
}

impl SampleSet {
    pub fn new(samples: Vec<Sample2D>, condition: Condition) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Parameter("sample set is empty".into()));
        }
        Ok(Self { samples, condition })
    }

    pub fn samples(&self) -> &[Sample2D] {
        &self.samples
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleDiversity {
    pub mode_coverage: usize,
    pub mean_pairwise_distance: f64,
}

/// Mode coverage within `radius` and mean pairwise Euclidean distance.
pub fn sample_diversity(
    set: &SampleSet,
    mode_centers: &[Sample2D],
    radius: f64,
) -> SampleDiversity {
    let samples = set.samples();
    let mode_coverage = mode_centers
        .iter()
        .filter(|m| samples.iter().any(|s| s.distance(**m) <= radius))
        .count();

    let subset: Vec<Sample2D> = if samples.len() > EXACT_PAIRWISE_LIMIT {
        let mut rng = ChaCha8Rng::seed_from_u64(SUBSAMPLE_SEED);
        sample(&mut rng, samples.len(), EXACT_PAIRWISE_LIMIT)
            .into_iter()
            .map(|i| samples[i])
            .collect()
    } else {
        samples.to_vec()
    };
    let n = subset.len();
    let mean_pairwise_distance = if n < 2 {
        0.0
    } else {
        let mut total = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                total += subset[i].distance(subset[j]);
            }
        }
        total / (n * (n - 1) / 2) as f64
    };
    SampleDiversity {
        mode_coverage,
        mean_pairwise_distance,
    }
}

/// 2-D histogram over `[−extent, extent]²`, scaled so the fullest cell is 255.
///
/// Row 0 is the top of the square (largest y). Samples outside are ignored.
pub fn rasterize(set: &SampleSet, grid: usize, extent: f64) -> Result<GrayImage> {
    if grid < 16 {
        return Err(Error::Parameter(format!("raster grid {grid} is below 16")));
    }
    if !(extent > 0.0 && extent.is_finite()) {
        return Err(Error::Parameter(format!(
            "raster extent {extent} must be positive"
        )));
    }
    let mut counts = vec![0u64; grid * grid];
    let cell = 2.0 * extent / grid as f64;
    for s in set.samples() {
        let col = ((s.x + extent) / cell).floor();
        let row = ((extent - s.y) / cell).floor();
        if col >= 0.0 && row >= 0.0 && (col as usize) < grid && (row as usize) < grid {
            counts[row as usize * grid + col as usize] += 1;
        }
    }
    let max = counts.iter().copied().max().unwrap_or(0);
    let pixels = counts
        .iter()
        .map(|&c| {
            if max == 0 {
                0
            } else {
                (255.0 * c as f64 / max as f64).round() as u8
            }
        })
        .collect();
    GrayImage::new(grid, grid, pixels)
}

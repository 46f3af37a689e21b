use super::GrayImage;
use crate::error::{Error, Result};

pub const DEFAULT_NEIGHBORHOOD: usize = 3;

fn shannon_bits(counts: impl Iterator<Item = u64>, total: f64) -> f64 {
    let h: f64 = counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

/// Gray-level histogram entropy in bits, in `[0, 8]`.
pub fn entropy_1d(img: &GrayImage) -> f64 {
    let mut hist = [0u64; 256];
    for &p in img.pixels() {
        hist[p as usize] += 1;
    }
    shannon_bits(hist.into_iter(), img.pixels().len() as f64)
}

/// Joint entropy in bits of (pixel level, rounded mean of its
/// `neighborhood × neighborhood` window), with replicate padding at borders.
/// The window includes the centre pixel.
pub fn entropy_2d(img: &GrayImage, neighborhood: usize) -> Result<f64> {
    if neighborhood == 0 || neighborhood % 2 == 0 {
        return Err(Error::Parameter(format!(
            "neighborhood {neighborhood} must be a positive odd integer"
        )));
    }
    let (w, h) = (img.width(), img.height());
    if w < neighborhood || h < neighborhood {
        return Err(Error::Shape(format!(
            "{w}x{h} image is smaller than the {neighborhood}x{neighborhood} neighborhood"
        )));
    }
    let half = (neighborhood / 2) as isize;
    let area = (neighborhood * neighborhood) as u64;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut joint = vec![0u64; 256 * 256];
    for r in 0..h {
        for c in 0..w {
            let mut sum = 0u64;
            for dr in -half..=half {
                for dc in -half..=half {
                    sum += img.get(clamp(r as isize + dr, h), clamp(c as isize + dc, w)) as u64;
                }
            }
            // Round to nearest; the window area is odd so halves cannot occur.
            let mean = (2 * sum + area) / (2 * area);
            joint[img.get(r, c) as usize * 256 + mean as usize] += 1;
        }
    }
    Ok(shannon_bits(joint.into_iter(), (w * h) as f64))
}

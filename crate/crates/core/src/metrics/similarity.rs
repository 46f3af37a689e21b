use std::fmt;

use serde::{Serialize, Serializer};

use super::{same_shape, GrayImage};
use crate::error::{Error, Result};

const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;
const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

fn squared_error_sum(a: &GrayImage, b: &GrayImage) -> f64 {
    a.pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Root-mean-square difference with intensities scaled to `[0, 1]`.
pub fn rmse(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    same_shape(a, b)?;
    let mse = squared_error_sum(a, b) / a.pixels().len() as f64;
    Ok(mse.sqrt() / 255.0)
}

/// Peak signal-to-noise ratio in decibels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Finite(f64),
    /// Identical images.
    Infinite,
}

impl Psnr {
    pub fn finite(self) -> Option<f64> {
        match self {
            Psnr::Finite(v) => Some(v),
            Psnr::Infinite => None,
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Psnr {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Psnr::Finite(v) => serializer.serialize_f64(*v),
            Psnr::Infinite => serializer.serialize_str("inf"),
        }
    }
}

/// `10 log₁₀(255² / MSE)` with MSE on the 0–255 scale.
pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<Psnr> {
    same_shape(a, b)?;
    let sse = squared_error_sum(a, b);
    if sse == 0.0 {
        return Ok(Psnr::Infinite);
    }
    let mse = sse / a.pixels().len() as f64;
    Ok(Psnr::Finite(10.0 * (255.0 * 255.0 / mse).log10()))
}

fn gaussian_window() -> [f64; WINDOW] {
    let half = (WINDOW / 2) as f64;
    let mut w = [0.0; WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let total: f64 = w.iter().sum();
    w.map(|v| v / total)
}

/// Separable weighted sum over every fully-contained window.
fn filter_valid(data: &[f64], width: usize, height: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let out_w = width - WINDOW + 1;
    let out_h = height - WINDOW + 1;
    let mut rows = vec![0.0; height * out_w];
    for r in 0..height {
        for c in 0..out_w {
            rows[r * out_w + c] = (0..WINDOW).map(|i| k[i] * data[r * width + c + i]).sum();
        }
    }
    let mut out = vec![0.0; out_h * out_w];
    for r in 0..out_h {
        for c in 0..out_w {
            out[r * out_w + c] = (0..WINDOW).map(|i| k[i] * rows[(r + i) * out_w + c]).sum();
        }
    }
    out
}

/// Mean structural similarity over 11×11 Gaussian windows (σ = 1.5).
pub fn ssim(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    same_shape(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < WINDOW || h < WINDOW {
        return Err(Error::Shape(format!(
            "SSIM needs at least {WINDOW}x{WINDOW} pixels, got {w}x{h}"
        )));
    }
    let k = gaussian_window();
    let x = a.as_f64();
    let y = b.as_f64();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let mx = filter_valid(&x, w, h, &k);
    let my = filter_valid(&y, w, h, &k);
    let mxx = filter_valid(&xx, w, h, &k);
    let myy = filter_valid(&yy, w, h, &k);
    let mxy = filter_valid(&xy, w, h, &k);
    let n = mx.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cxy = mxy[i] - ux * uy;
            // l·c·s with c₃ = c₂/2 collapses to the two-factor form.
            ((2.0 * ux * uy + C1) * (2.0 * cxy + C2)) / ((ux * ux + uy * uy + C1) * (vx + vy + C2))
        })
        .sum();
    Ok(total / n as f64)
}

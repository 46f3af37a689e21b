//! Feature similarity from phase congruency and gradient magnitude.
//!
//! Phase congruency uses a log-Gabor bank of 4 scales × 4 orientations
//! (minimum wavelength 6, scale factor 2, σ/f = 0.55, angular spread ratio
//! 1.2) with the usual noise compensation (k = 2). Gradients use the Scharr
//! operator.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{same_shape, GrayImage};
use crate::error::{Error, Result};

const MIN_SIZE: usize = 32;
const N_SCALE: usize = 4;
const N_ORIENT: usize = 4;
const MIN_WAVELENGTH: f64 = 6.0;
const MULT: f64 = 2.0;
const SIGMA_ON_F: f64 = 0.55;
const D_THETA_ON_SIGMA: f64 = 1.2;
const NOISE_K: f64 = 2.0;
const EPSILON: f64 = 1e-4;
const T1: f64 = 0.85;
const T2: f64 = 160.0;

struct Fft2 {
    rows: usize,
    cols: usize,
    planner: FftPlanner<f64>,
}

impl Fft2 {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            planner: FftPlanner::new(),
        }
    }

    fn run(&mut self, data: &mut [Complex<f64>], inverse: bool) {
        let (rows, cols) = (self.rows, self.cols);
        let row_fft = if inverse {
            self.planner.plan_fft_inverse(cols)
        } else {
            self.planner.plan_fft_forward(cols)
        };
        for row in data.chunks_exact_mut(cols) {
            row_fft.process(row);
        }
        let col_fft = if inverse {
            self.planner.plan_fft_inverse(rows)
        } else {
            self.planner.plan_fft_forward(rows)
        };
        let mut column = vec![Complex::new(0.0, 0.0); rows];
        for c in 0..cols {
            for r in 0..rows {
                column[r] = data[r * cols + c];
            }
            col_fft.process(&mut column);
            for r in 0..rows {
                data[r * cols + c] = column[r];
            }
        }
        if inverse {
            let scale = 1.0 / (rows * cols) as f64;
            for v in data.iter_mut() {
                *v *= scale;
            }
        }
    }
}

/// Frequency coordinates normalized to ±0.5, laid out with zero frequency
/// at index 0 (already quadrant-shifted).
fn shifted_axis(n: usize) -> Vec<f64> {
    let centred: Vec<f64> = if n % 2 == 1 {
        let half = (n - 1) as f64 / 2.0;
        (0..n).map(|i| (i as f64 - half) / (n - 1) as f64).collect()
    } else {
        let half = (n / 2) as f64;
        (0..n).map(|i| (i as f64 - half) / n as f64).collect()
    };
    // ifftshift moves the centre element to index 0.
    let shift = n / 2;
    (0..n).map(|i| centred[(i + shift) % n]).collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Phase congruency map of a row-major `rows × cols` image, values in `[0, 1]`.
pub fn phase_congruency(image: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let n = rows * cols;
    let mut fft = Fft2::new(rows, cols);
    let mut spectrum: Vec<Complex<f64>> = image.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.run(&mut spectrum, false);

    let xs = shifted_axis(cols);
    let ys = shifted_axis(rows);
    let mut radius = vec![0.0; n];
    let mut sin_theta = vec![0.0; n];
    let mut cos_theta = vec![0.0; n];
    let mut lowpass = vec![0.0; n];
    for r in 0..rows {
        for c in 0..cols {
            let (x, y) = (xs[c], ys[r]);
            let rad = (x * x + y * y).sqrt();
            let theta = (-y).atan2(x);
            let i = r * cols + c;
            lowpass[i] = 1.0 / (1.0 + (rad / 0.45).powi(30));
            radius[i] = rad;
            sin_theta[i] = theta.sin();
            cos_theta[i] = theta.cos();
        }
    }
    radius[0] = 1.0;

    let log_gabor: Vec<Vec<f64>> = (0..N_SCALE)
        .map(|s| {
            let fo = 1.0 / (MIN_WAVELENGTH * MULT.powi(s as i32));
            let denom = 2.0 * SIGMA_ON_F.ln().powi(2);
            let mut g: Vec<f64> = radius
                .iter()
                .zip(&lowpass)
                .map(|(&rad, &lp)| (-(rad / fo).ln().powi(2) / denom).exp() * lp)
                .collect();
            g[0] = 0.0;
            g
        })
        .collect();

    let theta_sigma = PI / N_ORIENT as f64 / D_THETA_ON_SIGMA;
    let mut energy_all = vec![0.0; n];
    let mut an_all = vec![0.0; n];

    for o in 0..N_ORIENT {
        let angle = o as f64 * PI / N_ORIENT as f64;
        let (sa, ca) = angle.sin_cos();
        let spread: Vec<f64> = (0..n)
            .map(|i| {
                let ds = sin_theta[i] * ca - cos_theta[i] * sa;
                let dc = cos_theta[i] * ca + sin_theta[i] * sa;
                let d = ds.atan2(dc).abs();
                (-d * d / (2.0 * theta_sigma * theta_sigma)).exp()
            })
            .collect();

        let mut sum_e = vec![0.0; n];
        let mut sum_o = vec![0.0; n];
        let mut sum_an = vec![0.0; n];
        let mut responses = Vec::with_capacity(N_SCALE);
        let mut spatial_filters = Vec::with_capacity(N_SCALE);
        let mut em_n = 0.0;
        for (s, gabor) in log_gabor.iter().enumerate() {
            let filter: Vec<f64> = gabor.iter().zip(&spread).map(|(g, sp)| g * sp).collect();
            if s == 0 {
                em_n = filter.iter().map(|f| f * f).sum();
            }
            let mut spatial: Vec<Complex<f64>> =
                filter.iter().map(|&f| Complex::new(f, 0.0)).collect();
            fft.run(&mut spatial, true);
            let norm = (n as f64).sqrt();
            spatial_filters.push(spatial.iter().map(|v| v.re * norm).collect::<Vec<f64>>());

            let mut eo: Vec<Complex<f64>> =
                spectrum.iter().zip(&filter).map(|(v, &f)| v * f).collect();
            fft.run(&mut eo, true);
            for i in 0..n {
                sum_an[i] += eo[i].norm();
                sum_e[i] += eo[i].re;
                sum_o[i] += eo[i].im;
            }
            responses.push(eo);
        }

        let mut energy = vec![0.0; n];
        for i in 0..n {
            let x_energy = (sum_e[i] * sum_e[i] + sum_o[i] * sum_o[i]).sqrt() + EPSILON;
            let mean_e = sum_e[i] / x_energy;
            let mean_o = sum_o[i] / x_energy;
            for eo in &responses {
                let (e, od) = (eo[i].re, eo[i].im);
                energy[i] += e * mean_e + od * mean_o - (e * mean_o - od * mean_e).abs();
            }
        }

        let mut smallest_power: Vec<f64> = responses[0].iter().map(|v| v.norm_sqr()).collect();
        let mean_e2n = -median(&mut smallest_power) / 0.5f64.ln();
        let noise_power = mean_e2n / em_n;
        let mut sum_an2 = 0.0;
        let mut sum_aiaj = 0.0;
        for i in 0..n {
            for si in 0..N_SCALE {
                let a = spatial_filters[si][i];
                sum_an2 += a * a;
                for sj in si + 1..N_SCALE {
                    sum_aiaj += a * spatial_filters[sj][i];
                }
            }
        }
        let noise_energy2 = 2.0 * noise_power * sum_an2 + 4.0 * noise_power * sum_aiaj;
        let tau = (noise_energy2 / 2.0).sqrt();
        let noise_mean = tau * (PI / 2.0).sqrt();
        let noise_sigma = ((2.0 - PI / 2.0) * tau * tau).sqrt();
        let threshold = (noise_mean + NOISE_K * noise_sigma) / 1.7;

        for i in 0..n {
            energy_all[i] += (energy[i] - threshold).max(0.0);
            an_all[i] += sum_an[i];
        }
    }

    energy_all
        .iter()
        .zip(&an_all)
        .map(|(&e, &a)| if a > 0.0 { e / a } else { 0.0 })
        .collect()
}

/// `conv2(img, k, 'same')` with zero padding and a 3×3 kernel.
fn convolve3_same(img: &[f64], rows: usize, cols: usize, k: &[[f64; 3]; 3]) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for (i, krow) in k.iter().enumerate() {
                for (j, &kv) in krow.iter().enumerate() {
                    // Convolution flips the kernel: out[r,c] += k[i,j] · img[r+1−i, c+1−j].
                    let rr = r as isize + 1 - i as isize;
                    let cc = c as isize + 1 - j as isize;
                    if rr >= 0 && cc >= 0 && (rr as usize) < rows && (cc as usize) < cols {
                        acc += kv * img[rr as usize * cols + cc as usize];
                    }
                }
            }
            out[r * cols + c] = acc;
        }
    }
    out
}

fn gradient_magnitude(img: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let dx = [[3.0, 0.0, -3.0], [10.0, 0.0, -10.0], [3.0, 0.0, -3.0]].map(|r| r.map(|v| v / 16.0));
    let dy = [[3.0, 10.0, 3.0], [0.0, 0.0, 0.0], [-3.0, -10.0, -3.0]].map(|r| r.map(|v| v / 16.0));
    let gx = convolve3_same(img, rows, cols, &dx);
    let gy = convolve3_same(img, rows, cols, &dy);
    gx.iter()
        .zip(&gy)
        .map(|(a, b)| (a * a + b * b).sqrt())
        .collect()
}

/// Box-filters with an `f × f` kernel and keeps every `f`-th pixel.
fn downsample(img: &[f64], rows: usize, cols: usize, f: usize) -> (Vec<f64>, usize, usize) {
    if f <= 1 {
        return (img.to_vec(), rows, cols);
    }
    // 'same' alignment of an even or odd box kernel, matching conv2.
    let before = (f - 1) / 2;
    let out_rows = rows.div_ceil(f);
    let out_cols = cols.div_ceil(f);
    let mut out = Vec::with_capacity(out_rows * out_cols);
    for r in (0..rows).step_by(f) {
        for c in (0..cols).step_by(f) {
            let mut acc = 0.0;
            for i in 0..f {
                for j in 0..f {
                    let rr = r as isize + i as isize - (f - 1 - before) as isize;
                    let cc = c as isize + j as isize - (f - 1 - before) as isize;
                    if rr >= 0 && cc >= 0 && (rr as usize) < rows && (cc as usize) < cols {
                        acc += img[rr as usize * cols + cc as usize];
                    }
                }
            }
            out.push(acc / (f * f) as f64);
        }
    }
    (out, out_rows, out_cols)
}

/// Feature similarity index in `[0, 1]`.
pub fn fsim(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    same_shape(a, b)?;
    let (rows, cols) = (a.height(), a.width());
    if rows < MIN_SIZE || cols < MIN_SIZE {
        return Err(Error::Shape(format!(
            "FSIM needs at least {MIN_SIZE}x{MIN_SIZE} pixels, got {cols}x{rows}"
        )));
    }
    let f = ((rows.min(cols) as f64 / 256.0).round() as usize).max(1);
    let (y1, r, c) = downsample(&a.as_f64(), rows, cols, f);
    let (y2, _, _) = downsample(&b.as_f64(), rows, cols, f);

    let pc1 = phase_congruency(&y1, r, c);
    let pc2 = phase_congruency(&y2, r, c);
    let g1 = gradient_magnitude(&y1, r, c);
    let g2 = gradient_magnitude(&y2, r, c);

    let mut num = 0.0;
    let mut den = 0.0;
    let mut plain = 0.0;
    for i in 0..r * c {
        let s_pc = (2.0 * pc1[i] * pc2[i] + T1) / (pc1[i] * pc1[i] + pc2[i] * pc2[i] + T1);
        let s_g = (2.0 * g1[i] * g2[i] + T2) / (g1[i] * g1[i] + g2[i] * g2[i] + T2);
        let pcm = pc1[i].max(pc2[i]);
        num += s_pc * s_g * pcm;
        den += pcm;
        plain += s_pc * s_g;
    }
    if den > 0.0 {
        Ok(num / den)
    } else {
        // Neither image has any phase structure: weight every pixel equally.
        Ok(plain / (r * c) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn structured(n: usize) -> GrayImage {
        GrayImage::from_fn(n, n, |r, c| {
            (40 + ((r / 8 + c / 8) % 2) * 120 + ((r * c) % 17) * 4) as u8
        })
        .unwrap()
    }

    #[test]
    fn self_similarity_is_one() {
        let a = structured(48);
        assert!((fsim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let flat = GrayImage::new(40, 40, vec![9; 1600]).unwrap();
        assert!((fsim(&flat, &flat).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_small_images() {
        let a = GrayImage::new(31, 40, vec![0; 31 * 40]).unwrap();
        assert!(matches!(fsim(&a, &a), Err(Error::Shape(_))));
    }

    #[test]
    fn phase_congruency_is_bounded() {
        let a = structured(40);
        let pc = phase_congruency(&a.as_f64(), 40, 40);
        assert!(pc.iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
        assert!(pc.iter().any(|&v| v > 0.1));
    }

    #[test]
    fn shifted_axis_layout() {
        assert_eq!(shifted_axis(4), vec![0.0, 0.25, -0.5, -0.25]);
        assert_eq!(shifted_axis(5), vec![0.0, 0.25, 0.5, -0.5, -0.25]);
    }

    #[test]
    fn median_of_even_count_averages() {
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&mut [5.0, 1.0, 3.0]), 3.0);
    }

    #[test]
    fn gradient_of_ramp() {
        // Interior horizontal ramp of slope 1: Scharr response (3+10+3)/16·2 = 2.
        let img: Vec<f64> = (0..25).map(|i| (i % 5) as f64).collect();
        let g = gradient_magnitude(&img, 5, 5);
        assert!((g[2 * 5 + 2] - 2.0).abs() < 1e-12);
    }
}

use std::collections::HashMap;

use fdiv_align::metrics::{entropy_1d, entropy_2d, fsim, psnr, rmse, ssim, GrayImage, Psnr};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
    let levels = rng.random_range(2..=256u32);
    let px = (0..w * h)
        .map(|_| rng.random_range(0..levels) as u8)
        .collect();
    GrayImage::new(w, h, px).unwrap()
}

fn naive_entropy(counts: HashMap<(u8, i64), usize>, n: usize) -> f64 {
    counts
        .values()
        .map(|&k| {
            let p = k as f64 / n as f64;
            -p * p.ln() / std::f64::consts::LN_2
        })
        .sum()
}

fn naive_entropy_2d(img: &GrayImage) -> f64 {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut counts = HashMap::new();
    for r in 0..h {
        for c in 0..w {
            let mut vals = Vec::new();
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let rr = (r + dr).max(0).min(h - 1) as usize;
                    let cc = (c + dc).max(0).min(w - 1) as usize;
                    vals.push(img.get(rr, cc) as f64);
                }
            }
            let mean = (vals.iter().sum::<f64>() / 9.0).round() as i64;
            *counts
                .entry((img.get(r as usize, c as usize), mean))
                .or_insert(0) += 1;
        }
    }
    naive_entropy(counts, (w * h) as usize)
}

#[test]
fn entropies_and_rmse_match_naive_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..20 {
        let (w, h) = (rng.random_range(3..24), rng.random_range(3..24));
        let a = random_image(&mut rng, w, h);
        let b = random_image(&mut rng, w, h);

        let mut counts = HashMap::new();
        for r in 0..h {
            for c in 0..w {
                *counts.entry((a.get(r, c), 0)).or_insert(0) += 1;
            }
        }
        assert!((entropy_1d(&a) - naive_entropy(counts, w * h)).abs() < 1e-9);
        assert!((entropy_2d(&a, 3).unwrap() - naive_entropy_2d(&a)).abs() < 1e-9);

        let mut sq = 0.0;
        for r in 0..h {
            for c in 0..w {
                sq += ((a.get(r, c) as f64 - b.get(r, c) as f64) / 255.0).powi(2);
            }
        }
        let expected = (sq / (w * h) as f64).sqrt();
        assert!((rmse(&a, &b).unwrap() - expected).abs() < 1e-9);
    }
}

#[test]
fn self_identity_and_symmetry() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for i in 0..50 {
        let side = 32 + 4 * (i % 5);
        let a = random_image(&mut rng, side, side);
        let b = random_image(&mut rng, side, side);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        assert_eq!(psnr(&a, &a).unwrap(), Psnr::Infinite);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((fsim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rmse(&a, &b).unwrap(), rmse(&b, &a).unwrap());
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        assert!((fsim(&a, &b).unwrap() - fsim(&b, &a).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn noise_worsens_every_fidelity_measure() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base = GrayImage::from_fn(48, 48, |r, c| (60 + (r * 3 + c * 2) % 120) as u8).unwrap();
    let noise: Vec<f64> = (0..48 * 48).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut last: Option<(f64, f64, f64)> = None;
    for amp in [4.0, 8.0, 16.0, 32.0, 64.0] {
        let noisy = GrayImage::new(
            48,
            48,
            base.pixels()
                .iter()
                .zip(&noise)
                .map(|(&p, n)| (p as f64 + amp * n).round().clamp(0.0, 255.0) as u8)
                .collect(),
        )
        .unwrap();
        let e = rmse(&base, &noisy).unwrap();
        let p = psnr(&base, &noisy).unwrap().finite().unwrap();
        let s = ssim(&base, &noisy).unwrap();
        if let Some((e0, p0, s0)) = last {
            assert!(e > e0 && p < p0 && s < s0, "amplitude {amp}");
        }
        last = Some((e, p, s));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn entropy_bounds(seed in any::<u64>(), w in 3usize..20, h in 3usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = random_image(&mut rng, w, h);
        let h1 = entropy_1d(&img);
        let h2 = entropy_2d(&img, 3).unwrap();
        prop_assert!((0.0..=8.0).contains(&h1));
        prop_assert!((0.0..=16.0).contains(&h2));
        prop_assert!(h2 >= h1 - 1e-9);
    }
}

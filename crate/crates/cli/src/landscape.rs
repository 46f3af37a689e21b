//! Loss surfaces over a `(X₁, X₂)` grid, as CSV and SVG heat-maps with
//! gradient arrows.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;
use fdiv_align::loss::{generalized_loss, loss_gradients, LossConfig, RatioPair};
use fdiv_align::numeric::lin_space;
use fdiv_align::Divergence;
use serde::{Deserialize, Serialize};

use crate::output::{file_stem, line, num, summary, Outputs};
use crate::{CommandConfig, ConfigError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandscapeConfig {
    pub out: PathBuf,
    pub seed: u64,
    pub divergences: Vec<Divergence>,
    pub beta: f64,
    pub x1_range: [f64; 2],
    pub x2_range: [f64; 2],
    pub points: usize,
    /// Loss level whose iso-slice sets the arrow length scale.
    pub z_plane: f64,
    /// Arrows per axis.
    pub arrows: usize,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out/landscape"),
            seed: 0,
            divergences: Divergence::family(0.5).expect("valid alpha").to_vec(),
            beta: 10.0,
            x1_range: [0.05, 5.0],
            x2_range: [0.05, 5.0],
            points: 100,
            z_plane: 50.0,
            arrows: 20,
        }
    }
}

impl CommandConfig for LandscapeConfig {
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
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(ConfigError(format!("beta {} must be positive", self.beta)));
        }
        for (name, [lo, hi]) in [("x1_range", self.x1_range), ("x2_range", self.x2_range)] {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(ConfigError(format!(
                    "{name} [{lo}, {hi}] must satisfy 0 < lo < hi"
                )));
            }
        }
        if self.points < 2 {
            return Err(ConfigError(format!(
                "points = {} but at least 2 are needed",
                self.points
            )));
        }
        if self.arrows == 0 || self.arrows > self.points {
            return Err(ConfigError(format!(
                "arrows = {} must lie in 1..={}",
                self.arrows, self.points
            )));
        }
        if !(self.z_plane > 0.0 && self.z_plane.is_finite()) {
            return Err(ConfigError(format!(
                "z_plane {} must be positive",
                self.z_plane
            )));
        }
        Ok(())
    }
}

/// Loss and gradient on a rectangular grid; `loss[i][j]` sits at
/// `(x1_axis[i], x2_axis[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeGrid {
    pub divergence: Divergence,
    pub beta: f64,
    pub x1_axis: Vec<f64>,
    pub x2_axis: Vec<f64>,
    pub loss: Vec<Vec<f64>>,
    pub gradient: Vec<Vec<(f64, f64)>>,
}

impl LandscapeGrid {
    pub fn compute(
        divergence: Divergence,
        beta: f64,
        x1_axis: Vec<f64>,
        x2_axis: Vec<f64>,
    ) -> fdiv_align::Result<Self> {
        let cfg = LossConfig::new(divergence, beta)?;
        let mut loss = Vec::with_capacity(x1_axis.len());
        let mut gradient = Vec::with_capacity(x1_axis.len());
        for &x1 in &x1_axis {
            let mut lrow = Vec::with_capacity(x2_axis.len());
            let mut grow = Vec::with_capacity(x2_axis.len());
            for &x2 in &x2_axis {
                let pair = RatioPair::new(x1, x2)?;
                let g = loss_gradients(&cfg, &pair);
                lrow.push(generalized_loss(&cfg, &pair));
                grow.push((g.d_x1, g.d_x2));
            }
            loss.push(lrow);
            gradient.push(grow);
        }
        Ok(Self {
            divergence,
            beta,
            x1_axis,
            x2_axis,
            loss,
            gradient,
        })
    }

    /// Indices of the grid point nearest `(x1, x2)`.
    pub fn nearest(&self, x1: f64, x2: f64) -> (usize, usize) {
        let closest = |axis: &[f64], v: f64| {
            (0..axis.len())
                .min_by(|&a, &b| (axis[a] - v).abs().total_cmp(&(axis[b] - v).abs()))
                .unwrap_or(0)
        };
        (closest(&self.x1_axis, x1), closest(&self.x2_axis, x2))
    }

    /// Largest gradient norm over the grid.
    pub fn max_gradient_norm(&self) -> f64 {
        self.gradient
            .iter()
            .flatten()
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x1,x2,loss,d_x1,d_x2\n");
        for (i, &x1) in self.x1_axis.iter().enumerate() {
            for (j, &x2) in self.x2_axis.iter().enumerate() {
                let (g1, g2) = self.gradient[i][j];
                line(
                    &mut out,
                    &[num(x1), num(x2), num(self.loss[i][j]), num(g1), num(g2)],
                );
            }
        }
        out
    }

    /// Heat-map of `ln L` with `arrows × arrows` descent arrows. Arrow lengths
    /// are scaled by the gradient norm at the grid point whose loss is nearest
    /// `z_plane`; steeper arrows saturate at one arrow cell.
    pub fn to_svg(&self, arrows: usize, z_plane: f64) -> String {
        const SIZE: f64 = 500.0;
        const MARGIN: f64 = 50.0;
        let (n1, n2) = (self.x1_axis.len(), self.x2_axis.len());
        let (cw, ch) = (SIZE / n1 as f64, SIZE / n2 as f64);
        let logs: Vec<f64> = self.loss.iter().flatten().map(|v| v.ln()).collect();
        let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
            w = SIZE + 2.0 * MARGIN,
            h = SIZE + 2.0 * MARGIN
        );
        let _ = writeln!(
            svg,
            r#"<text x="{MARGIN}" y="30" font-family="sans-serif" font-size="14">{} loss, beta = {}, arrows scaled at Z = {}</text>"#,
            self.divergence, self.beta, z_plane
        );
        let _ = writeln!(svg, r#"<g shape-rendering="crispEdges">"#);
        for i in 0..n1 {
            for j in 0..n2 {
                let t = (self.loss[i][j].ln() - lo) / span;
                let x = MARGIN + i as f64 * cw;
                let y = MARGIN + SIZE - (j + 1) as f64 * ch;
                let _ = writeln!(
                    svg,
                    r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                    cw + 0.01,
                    ch + 0.01,
                    palette(t)
                );
            }
        }
        let _ = writeln!(svg, "</g>");

        let flat: Vec<(usize, usize)> =
            (0..n1).flat_map(|i| (0..n2).map(move |j| (i, j))).collect();
        let (zi, zj) = flat
            .iter()
            .copied()
            .min_by(|a, b| {
                (self.loss[a.0][a.1] - z_plane)
                    .abs()
                    .total_cmp(&(self.loss[b.0][b.1] - z_plane).abs())
            })
            .unwrap_or((0, 0));
        let (g1, g2) = self.gradient[zi][zj];
        let reference = g1.hypot(g2);
        let cell = SIZE / arrows as f64;
        let _ = writeln!(
            svg,
            r#"<g stroke="white" stroke-width="1.2" fill="none" data-z-plane="{z_plane}">"#
        );
        for a in 0..arrows {
            for b in 0..arrows {
                let i = ((a as f64 + 0.5) * n1 as f64 / arrows as f64) as usize;
                let j = ((b as f64 + 0.5) * n2 as f64 / arrows as f64) as usize;
                let (d1, d2) = self.gradient[i.min(n1 - 1)][j.min(n2 - 1)];
                let norm = d1.hypot(d2);
                if !(norm > 0.0 && norm.is_finite()) {
                    continue;
                }
                let len = 0.8
                    * cell
                    * if reference > 0.0 {
                        (norm / reference).min(1.0)
                    } else {
                        1.0
                    };
                // Descent direction; screen y grows downwards.
                let (ux, uy) = (-d1 / norm, d2 / norm);
                let cx = MARGIN + (a as f64 + 0.5) * cell;
                let cy = MARGIN + SIZE - (b as f64 + 0.5) * cell;
                let (x0, y0) = (cx - 0.5 * len * ux, cy - 0.5 * len * uy);
                let (x1, y1) = (cx + 0.5 * len * ux, cy + 0.5 * len * uy);
                let head = 0.3 * len;
                let (hx, hy) = (-ux * head, -uy * head);
                let (px, py) = (-uy * head * 0.5, ux * head * 0.5);
                let _ = writeln!(
                    svg,
                    r#"<path d="M{x0:.2} {y0:.2} L{x1:.2} {y1:.2} M{:.2} {:.2} L{x1:.2} {y1:.2} L{:.2} {:.2}"/>"#,
                    x1 + hx + px,
                    y1 + hy + py,
                    x1 + hx - px,
                    y1 + hy - py
                );
            }
        }
        let _ = writeln!(svg, "</g>");
        let _ = writeln!(
            svg,
            r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
        );
        let axis = |v: &[f64]| (v[0], v[v.len() - 1]);
        let (a1, b1) = axis(&self.x1_axis);
        let (a2, b2) = axis(&self.x2_axis);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">X1 from {a1} to {b1}</text>"#,
            MARGIN + SIZE / 2.0,
            MARGIN + SIZE + 30.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="20" y="{y}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 20 {y})">X2 from {a2} to {b2}</text>"#,
            y = MARGIN + SIZE / 2.0
        );
        svg.push_str("</svg>\n");
        svg
    }
}

/// Dark blue through teal and green to yellow.
fn palette(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let pos = t * (STOPS.len() - 1) as f64;
    let k = (pos.floor() as usize).min(STOPS.len() - 2);
    let f = pos - k as f64;
    let mix = |a: f64, b: f64| (a + (b - a) * f).round() as u8;
    let (a, b) = (STOPS[k], STOPS[k + 1]);
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(a.0, b.0),
        mix(a.1, b.1),
        mix(a.2, b.2)
    )
}

/// Per-divergence summary row: anchor value nearest `(1, 1)` and the largest
/// gradient norm.
pub const SUMMARY_HEADER: &str = "divergence,anchor_x1,anchor_x2,anchor_loss,max_gradient_norm";

pub fn run(cfg: LandscapeConfig) -> Result<String> {
    let mut outputs = Outputs::prepare(&cfg.out)?;
    let x1_axis = lin_space(cfg.x1_range[0], cfg.x1_range[1], cfg.points);
    let x2_axis = lin_space(cfg.x2_range[0], cfg.x2_range[1], cfg.points);
    let mut table = format!("{SUMMARY_HEADER}\n");
    for d in &cfg.divergences {
        let grid = LandscapeGrid::compute(*d, cfg.beta, x1_axis.clone(), x2_axis.clone())?;
        let stem = file_stem(d);
        let (i, j) = grid.nearest(1.0, 1.0);
        line(
            &mut table,
            &[
                d.to_string(),
                num(grid.x1_axis[i]),
                num(grid.x2_axis[j]),
                num(grid.loss[i][j]),
                num(grid.max_gradient_norm()),
            ],
        );
        outputs.add(format!("landscape_{stem}.csv"), grid.to_csv());
        outputs.add(
            format!("landscape_{stem}.svg"),
            grid.to_svg(cfg.arrows, cfg.z_plane),
        );
    }
    outputs.add("summary.csv", table);
    Ok(summary(&outputs.finish(&cfg)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn small(d: Divergence) -> LandscapeGrid {
        LandscapeGrid::compute(d, 10.0, lin_space(0.5, 1.5, 5), lin_space(0.5, 1.5, 5)).unwrap()
    }

    #[test]
    fn anchor_is_ln_two() {
        for d in Divergence::family(0.5).unwrap() {
            let g = small(d);
            let (i, j) = g.nearest(1.0, 1.0);
            assert_eq!((i, j), (2, 2));
            assert!((g.loss[i][j] - LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn csv_shape() {
        let csv = small(Divergence::ReverseKl).to_csv();
        assert_eq!(csv.lines().count(), 26);
        assert!(csv.starts_with("x1,x2,loss,d_x1,d_x2\n"));
    }

    #[test]
    fn svg_has_every_cell_and_arrow() {
        let svg = small(Divergence::JensenShannon).to_svg(5, 50.0);
        assert_eq!(svg.matches("<rect").count(), 26);
        assert_eq!(svg.matches("<path").count(), 25);
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn palette_ends() {
        assert_eq!(palette(0.0), "#440154");
        assert_eq!(palette(1.0), "#fde725");
        assert_eq!(palette(f64::NAN), "#440154");
    }

    #[test]
    fn config_validation() {
        let mut cfg = LandscapeConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.points = 1;
        assert!(cfg.validate().is_err());
        cfg = LandscapeConfig::default();
        cfg.x1_range = [0.0, 5.0];
        assert!(cfg.validate().is_err());
        cfg = LandscapeConfig::default();
        cfg.divergences.push(Divergence::ReverseKl);
        assert!(cfg.validate().is_err());
    }
}

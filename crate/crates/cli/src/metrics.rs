//! Pairwise and per-image metric reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fdiv_align::diffusion::{Condition, Sample2D};
use fdiv_align::metrics::{
    entropy_1d, entropy_2d, fsim, pgm, psnr, rasterize, rmse, ssim, GrayImage, SampleSet,
};
use serde::{Deserialize, Serialize};

use crate::output::{line, num, summary, Outputs};
use crate::{check_exists, CommandConfig, ConfigError};

pub const PAIRWISE_HEADER: &str = "img_a,img_b,rmse,psnr,ssim,fsim";
pub const ENTROPY_HEADER: &str = "img,entropy1d,entropy2d";
/// Written in place of a metric the image size does not support.
pub const NOT_AVAILABLE: &str = "na";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub out: PathBuf,
    pub seed: u64,
    /// Directory of `.pgm` files, a single `.pgm` file, or a sample CSV with
    /// `x,y[,condition]` columns.
    pub input: Option<PathBuf>,
    pub neighborhood: usize,
    /// Raster size and half-width used for sample CSVs.
    pub raster_grid: usize,
    pub raster_extent: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out/metrics"),
            seed: 0,
            input: None,
            neighborhood: fdiv_align::metrics::DEFAULT_NEIGHBORHOOD,
            raster_grid: 64,
            raster_extent: 3.0,
        }
    }
}

impl CommandConfig for MetricsConfig {
    fn out(&mut self) -> &mut PathBuf {
        &mut self.out
    }

    fn seed(&mut self) -> &mut u64 {
        &mut self.seed
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.neighborhood == 0 || self.neighborhood % 2 == 0 {
            return Err(ConfigError(format!(
                "neighborhood {} must be a positive odd integer",
                self.neighborhood
            )));
        }
        Ok(())
    }
}

/// Named images, in report order.
pub fn load_images(input: &Path, cfg: &MetricsConfig) -> Result<Vec<(String, GrayImage)>> {
    if input.is_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(input)
            .with_context(|| format!("listing {}", input.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()
            .with_context(|| format!("listing {}", input.display()))?;
        paths.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")));
        paths.sort();
        return paths
            .iter()
            .map(|p| Ok((display_name(p), pgm::read(p)?)))
            .collect();
    }
    if input
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        let text = std::fs::read_to_string(input)
            .with_context(|| format!("reading {}", input.display()))?;
        let groups = parse_samples(&text, &input.display().to_string())?;
        return groups
            .into_iter()
            .map(|(c, samples)| {
                let set = SampleSet::new(samples, Condition(c))?;
                Ok((
                    format!("condition-{c}"),
                    rasterize(&set, cfg.raster_grid, cfg.raster_extent)?,
                ))
            })
            .collect();
    }
    Ok(vec![(display_name(input), pgm::read(input)?)])
}

fn display_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

/// Sample rows grouped by condition (missing column means condition 0).
pub fn parse_samples(text: &str, file: &str) -> fdiv_align::Result<BTreeMap<usize, Vec<Sample2D>>> {
    let err = |offset: usize, message: String| fdiv_align::Error::Parse {
        file: file.to_string(),
        offset,
        message,
    };
    let mut offset = 0;
    let mut lines = text.split_inclusive('\n');
    let header = lines
        .next()
        .ok_or_else(|| err(0, "empty sample file".into()))?;
    offset += header.len();
    let cols: Vec<&str> = header.trim_end().split(',').map(str::trim).collect();
    let find = |name: &str| cols.iter().position(|c| *c == name);
    let (xi, yi) = match (find("x"), find("y")) {
        (Some(x), Some(y)) => (x, y),
        _ => {
            return Err(err(
                0,
                format!("header {:?} lacks x and y columns", header.trim_end()),
            ))
        }
    };
    let ci = find("condition");
    let mut groups: BTreeMap<usize, Vec<Sample2D>> = BTreeMap::new();
    for row in lines {
        let start = offset;
        offset += row.len();
        if row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.trim_end().split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(err(
                start,
                format!("expected {} fields, found {}", cols.len(), fields.len()),
            ));
        }
        let coord = |i: usize| {
            fields[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(start, format!("bad coordinate {:?}", fields[i])))
        };
        let s = Sample2D::new(coord(xi)?, coord(yi)?);
        let c = match ci {
            Some(i) => fields[i]
                .parse::<usize>()
                .map_err(|_| err(start, format!("bad condition {:?}", fields[i])))?,
            None => 0,
        };
        groups.entry(c).or_default().push(s);
    }
    if groups.is_empty() {
        return Err(err(offset, "no sample rows".into()));
    }
    Ok(groups)
}

fn field(v: fdiv_align::Result<f64>) -> Result<String> {
    match v {
        Ok(x) => Ok(num(x)),
        Err(fdiv_align::Error::Shape(_)) => Ok(NOT_AVAILABLE.to_string()),
        Err(e) => Err(e.into()),
    }
}

/// `(pairwise.csv, entropy.csv)` contents.
pub fn report(images: &[(String, GrayImage)], neighborhood: usize) -> Result<(String, String)> {
    let mut pairwise = format!("{PAIRWISE_HEADER}\n");
    for (i, (na, a)) in images.iter().enumerate() {
        for (nb, b) in &images[i + 1..] {
            let p = match psnr(a, b) {
                Ok(p) => p.to_string(),
                Err(fdiv_align::Error::Shape(_)) => NOT_AVAILABLE.to_string(),
                Err(e) => return Err(e.into()),
            };
            line(
                &mut pairwise,
                &[
                    na.clone(),
                    nb.clone(),
                    field(rmse(a, b))?,
                    p,
                    field(ssim(a, b))?,
                    field(fsim(a, b))?,
                ],
            );
        }
    }
    let mut entropy = format!("{ENTROPY_HEADER}\n");
    for (name, img) in images {
        line(
            &mut entropy,
            &[
                name.clone(),
                num(entropy_1d(img)),
                field(entropy_2d(img, neighborhood))?,
            ],
        );
    }
    Ok((pairwise, entropy))
}

pub fn run(cfg: MetricsConfig) -> Result<String> {
    let input = cfg
        .input
        .clone()
        .ok_or_else(|| ConfigError("metrics needs an input path".into()))?;
    check_exists(&input)?;
    let mut outputs = Outputs::prepare(&cfg.out)?;
    let images = load_images(&input, &cfg)?;
    if images.is_empty() {
        return Err(ConfigError(format!("no PGM images in {}", input.display())).into());
    }
    let (pairwise, entropy) = report(&images, cfg.neighborhood)?;
    outputs.add("pairwise.csv", pairwise);
    outputs.add("entropy.csv", entropy);
    Ok(summary(&outputs.finish(&cfg)?))
}

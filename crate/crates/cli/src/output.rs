use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub const EFFECTIVE_CONFIG: &str = "effective_config.json";
const PROBE: &str = ".write-probe";

/// Files produced by one command, written together once the work is done.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    /// Creates `dir` and checks it is writable before any work starts.
    pub fn prepare(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        let probe = dir.join(PROBE);
        fs::write(&probe, b"")
            .with_context(|| format!("output directory {} is not writable", dir.display()))?;
        fs::remove_file(&probe).with_context(|| format!("removing {}", probe.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn add(&mut self, name: impl Into<String>, contents: impl Into<Vec<u8>>) {
        self.files.push((name.into(), contents.into()));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }

    /// Writes every file plus the effective config; returns the written paths.
    pub fn finish<C: Serialize>(mut self, effective: &C) -> Result<Vec<PathBuf>> {
        self.add_json(EFFECTIVE_CONFIG, effective)?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, contents) in &self.files {
            let path = self.dir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)
                    .with_context(|| format!("creating {}", parent.display()))?;
            }
            fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// CSV field for a float: shortest representation that round-trips.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Joins already-formatted fields into one CSV line.
pub fn line(out: &mut String, fields: &[String]) {
    let _ = writeln!(out, "{}", fields.join(","));
}

/// File-name form of a divergence, e.g. `alpha-0.5`.
pub fn file_stem(d: &fdiv_align::Divergence) -> String {
    d.to_string().replace(':', "-")
}

pub fn summary(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| format!("wrote {}", p.display()))
        .collect::<Vec<_>>()
        .join("\n")
}

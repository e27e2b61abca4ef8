//! The five named experiments. Each one generates its data, trains, explains,
//! evaluates and writes `report.json` plus its artifacts under `out/<name>/`.

mod center_bias;
mod corner_bias;
mod feature_verification;
mod missing_class;
mod sampling_ratio;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::report::ExperimentReport;

pub const EXPERIMENTS: [&str; 5] = [
    "feature-verification",
    "sampling-ratio",
    "center-bias",
    "corner-bias",
    "missing-class",
];

/// Dataset sizes and training length. [`Sizes::standard`] is what the binary runs;
/// [`Sizes::smoke`] only exercises the plumbing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sizes {
    pub patches: usize,
    pub tiles: usize,
    pub epochs: usize,
    pub folds: usize,
    /// Repetitions of the sampling-ratio comparison.
    pub seeds: usize,
    /// Corrupted test patches explained in the corner-bias experiment.
    pub explained: usize,
}

impl Sizes {
    pub fn standard(experiment: &str) -> Self {
        let base = Sizes {
            patches: 2000,
            tiles: 5,
            epochs: 5,
            folds: 3,
            seeds: 5,
            explained: 50,
        };
        match experiment {
            "corner-bias" => Sizes { patches: 1200, epochs: 8, ..base },
            "sampling-ratio" => Sizes { patches: 1000, epochs: 12, folds: 0, ..base },
            _ => base,
        }
    }

    pub fn smoke() -> Self {
        Sizes {
            patches: 240,
            tiles: 2,
            epochs: 1,
            folds: 0,
            seeds: 2,
            explained: 8,
        }
    }
}

pub fn usage() -> String {
    format!("valid experiments: {}", EXPERIMENTS.join(", "))
}

pub fn run(name: &str, seed: u64, out: &Path) -> Result<ExperimentReport> {
    run_with(name, seed, out, &Sizes::standard(name))
}

pub fn run_with(name: &str, seed: u64, out: &Path, sizes: &Sizes) -> Result<ExperimentReport> {
    if !EXPERIMENTS.contains(&name) {
        bail!("unknown experiment `{name}`; {}", usage());
    }
    let dir = out.join(name);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let ctx = Ctx {
        seed,
        dir: dir.clone(),
        sizes: *sizes,
    };
    let mut report = ExperimentReport::new(name, seed);
    report.input("sizes", sizes);
    match name {
        "feature-verification" => feature_verification::run(&ctx, &mut report)?,
        "sampling-ratio" => sampling_ratio::run(&ctx, &mut report)?,
        "center-bias" => center_bias::run(&ctx, &mut report)?,
        "corner-bias" => corner_bias::run(&ctx, &mut report)?,
        "missing-class" => missing_class::run(&ctx, &mut report)?,
        _ => unreachable!(),
    }
    let path = report.save(&dir)?;
    report.artifacts.push(path.file_name().unwrap().to_string_lossy().into_owned());
    report.save(&dir)?;
    Ok(report)
}

pub(crate) struct Ctx {
    pub seed: u64,
    pub dir: PathBuf,
    pub sizes: Sizes,
}

impl Ctx {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

/// Runs one pipeline stage, tagging any failure with the stage name.
pub(crate) fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().with_context(|| format!("stage `{name}` failed"))
}

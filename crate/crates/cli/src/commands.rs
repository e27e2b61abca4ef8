//! Thin wrappers: each subcommand loads its inputs, calls one library operation
//! and writes the result.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use rlvs_core::datagen::{exclude_class, gen_dataset, generate_center_bias, write_dataset, DatasetManifest, Split, SynthConfig};
use rlvs_core::evaluation::{cell_labels, cell_scores, roc, AnnotationSet};
use rlvs_core::explain::{explain_tile, lrp, RuleConfig};
use rlvs_core::heatmap::{normalize, plan_grid, render, stitch, Heatmap, NormPolicy, DEFAULT_ALPHA};
use rlvs_core::imaging::{image_to_tensor, load_rgb};
use rlvs_core::nn::{forward, load_model, reference_model, ArchConfig, Head};
use rlvs_core::rng::subseed;
use rlvs_core::trainer::{log_csv, train, TrainConfig, TrainSet};

use crate::experiments;

#[derive(Debug, Parser)]
#[command(name = "rlvs", version, about = "Relevance heatmaps and bias experiments for small CNNs")]
pub struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (or file for `stitch` and `render`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON config for the subcommand (synthesis for `gen`, training for `train`, rules for `explain`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic patch dataset.
    Gen(GenArgs),
    /// Train the reference network on a generated dataset.
    Train(TrainArgs),
    /// LRP heatmap for an image (a patch, or a tile covered by a patch grid).
    Explain(ExplainArgs),
    /// Stitch patch heatmaps into one tile heatmap.
    Stitch(StitchArgs),
    /// Cell-level ROC of a heatmap against point annotations.
    Eval(EvalArgs),
    /// Run a named experiment end to end.
    Experiment(ExperimentArgs),
    /// Render a heatmap over an image.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.5)]
    pub tumor_fraction: f32,
    /// Label every patch by its central cell instead.
    #[arg(long)]
    pub center: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum HeadArg {
    Global,
    Pooled,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory holding `manifest.json`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = HeadArg::Global)]
    pub head: HeadArg,
    /// Pool window for `--head pooled`.
    #[arg(long, default_value_t = 4)]
    pub pool: usize,
    /// Drop training patches containing this region class.
    #[arg(long)]
    pub exclude: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub target: usize,
    /// Patch overlap when the image is larger than the model input.
    #[arg(long, default_value_t = 0.0)]
    pub overlap: f64,
}

#[derive(Debug, Args)]
pub struct StitchArgs {
    /// Patch heatmaps in grid order (or carrying their origin).
    #[arg(required = true)]
    pub heatmaps: Vec<PathBuf>,
    #[arg(long)]
    pub height: usize,
    #[arg(long)]
    pub width: usize,
    #[arg(long, default_value_t = 0.0)]
    pub overlap: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub heatmap: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, default_value_t = rlvs_core::evaluation::DEFAULT_RADIUS)]
    pub radius: f32,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(value_parser = experiments::EXPERIMENTS)]
    pub name: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormArg {
    Local,
    None,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub heatmap: PathBuf,
    /// Base image; a white background when absent.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f32,
    #[arg(long, value_enum, default_value_t = NormArg::Local)]
    pub norm: NormArg,
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let s = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&s).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn out_dir(cli: &Cli, default: &str) -> Result<PathBuf> {
    let d = cli.out.clone().unwrap_or_else(|| PathBuf::from(default));
    std::fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
    Ok(d)
}

fn out_file(cli: &Cli, default: &str) -> Result<PathBuf> {
    let f = cli.out.clone().unwrap_or_else(|| PathBuf::from(default));
    if let Some(parent) = f.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(f)
}

/// Runs one parsed command and returns a short summary for stdout.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Explain(a) => cmd_explain(cli, a),
        Command::Stitch(a) => cmd_stitch(cli, a),
        Command::Eval(a) => cmd_eval(cli, a),
        Command::Experiment(a) => cmd_experiment(cli, a),
        Command::Render(a) => cmd_render(cli, a),
    }
}

pub fn cmd_gen(cli: &Cli, a: &GenArgs) -> Result<String> {
    let cfg: SynthConfig = read_config(cli.config.as_deref())?;
    let dir = out_dir(cli, "data")?;
    let seed = subseed(cli.seed, "data", 0);
    let manifest = if a.center {
        write_dataset(&generate_center_bias(&cfg, a.n, seed)?, &dir)?
    } else {
        gen_dataset(&cfg, a.n, a.tumor_fraction, seed, &dir)?
    };
    Ok(format!(
        "wrote {} patches ({} cancer) to {}",
        manifest.entries.len(),
        manifest.class_counts[1],
        dir.display()
    ))
}

pub fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<String> {
    let mut cfg: TrainConfig = read_config(cli.config.as_deref())?;
    if cli.config.is_none() {
        cfg.seed = subseed(cli.seed, "sampling", 0);
    }
    let mut manifest = DatasetManifest::load(a.data.join("manifest.json"))?;
    if let Some(class) = &a.exclude {
        manifest = exclude_class(&manifest, class)?.0;
    }
    let samples = manifest.load_samples(&a.data)?;
    let train_samples: Vec<_> = samples.iter().filter(|s| s.split == Split::Train).collect();
    let set = TrainSet::from_samples(&train_samples)?;
    let arch = ArchConfig {
        size: set.item.h,
        head: match a.head {
            HeadArg::Global => Head::Global,
            HeadArg::Pooled => Head::Pooled(a.pool),
        },
        ..Default::default()
    };
    let model = reference_model(&arch, subseed(cli.seed, "init", 0))?;
    let out = train(&model, &set, &cfg)?;
    let dir = out_dir(cli, "model")?;
    rlvs_core::nn::save_model(&out.model, dir.join("model.json"))?;
    std::fs::write(dir.join("train_log.csv"), log_csv(&out.log))?;
    cfg.save(dir.join("train_config.json"))?;
    Ok(format!("trained for {} epochs; model in {}", out.best_epoch, dir.display()))
}

pub fn cmd_explain(cli: &Cli, a: &ExplainArgs) -> Result<String> {
    let rules: RuleConfig = read_config(cli.config.as_deref())?;
    let model = load_model(&a.model)?;
    let img = load_rgb(&a.image)?;
    let input = model.input_shape();
    let map = if (img.height() as usize, img.width() as usize) == (input.h, input.w) {
        let o = forward(&model, &image_to_tensor(&img), true)?;
        lrp(&model, o.trace.as_ref().expect("captured"), a.target, &rules)?.remove(0)
    } else {
        let grid = plan_grid((img.height() as usize, img.width() as usize), input.h, a.overlap)?;
        explain_tile(&model, &img, &grid, a.target, &rules)?.1.map
    };
    let dir = out_dir(cli, "explain")?;
    let stem = a.image.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    let raw = dir.join(format!("{stem}.rhm"));
    map.save(&raw)?;
    let mut norm = vec![map];
    normalize(&mut norm, NormPolicy::Local)?;
    let png = dir.join(format!("{stem}.png"));
    render(&norm[0], &img, DEFAULT_ALPHA)?.save(&png)?;
    Ok(format!("wrote {} and {}", raw.display(), png.display()))
}

pub fn cmd_stitch(cli: &Cli, a: &StitchArgs) -> Result<String> {
    let maps = a.heatmaps.iter().map(Heatmap::load).collect::<rlvs_core::Result<Vec<_>>>()?;
    let Some(first) = maps.first() else { bail!("no heatmaps given") };
    if first.height != first.width {
        bail!("patch heatmaps must be square");
    }
    let grid = plan_grid((a.height, a.width), first.height, a.overlap)?;
    let mut maps = maps;
    if maps.iter().all(|m| m.provenance.origin.is_some()) {
        let order = |m: &Heatmap| {
            let (x, y) = m.provenance.origin.unwrap();
            grid.origins.iter().position(|&o| o == (x, y))
        };
        if maps.iter().all(|m| order(m).is_some()) {
            maps.sort_by_key(|m| order(m));
        }
    }
    let tile = stitch(&maps, &grid)?;
    let path = out_file(cli, "tile.rhm")?;
    tile.map.save(&path)?;
    Ok(format!("stitched {} patches into {}", maps.len(), path.display()))
}

pub fn cmd_eval(cli: &Cli, a: &EvalArgs) -> Result<String> {
    let map = Heatmap::load(&a.heatmap)?;
    let ann = AnnotationSet::load(&a.annotations)?;
    let scores = cell_scores(&map, &ann, a.radius)?;
    let curve = roc(&cell_labels(&scores))?;
    let dir = out_dir(cli, "eval")?;
    curve.save_csv(dir.join("roc.csv"))?;
    curve.save_plot(dir.join("roc.png"))?;
    let summary = serde_json::json!({
        "auc": curve.auc,
        "positives": curve.positives,
        "negatives": curve.negatives,
        "radius": a.radius,
    });
    std::fs::write(dir.join("auc.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(format!("AUC {:.4} over {} cancer and {} other cells", curve.auc, curve.positives, curve.negatives))
}

pub fn cmd_experiment(cli: &Cli, a: &ExperimentArgs) -> Result<String> {
    let dir = out_dir(cli, "experiments")?;
    let report = experiments::run(&a.name, cli.seed, &dir)?;
    let mut s = String::new();
    for v in &report.verdicts {
        s.push_str(&format!(
            "{} {}: {} = {:.4} {} {} ({:.4})\n",
            if v.pass { "PASS" } else { "FAIL" },
            v.check,
            v.metric,
            v.value,
            serde_json::to_value(v.cmp)?.as_str().unwrap_or("?"),
            v.threshold,
            v.threshold_value
        ));
    }
    s.push_str(&format!("report: {}", dir.join(&a.name).join("report.json").display()));
    Ok(s)
}

pub fn cmd_render(cli: &Cli, a: &RenderArgs) -> Result<String> {
    let mut map = Heatmap::load(&a.heatmap)?;
    if let NormArg::Local = a.norm {
        let mut v = vec![map];
        normalize(&mut v, NormPolicy::Local)?;
        map = v.remove(0);
    }
    let img = match &a.image {
        Some(p) => render(&map, &load_rgb(p)?, a.alpha)?,
        None => rlvs_core::heatmap::render_plain(&map),
    };
    let path = out_file(cli, "heatmap.png")?;
    img.save(&path)?;
    Ok(format!("wrote {}", path.display()))
}

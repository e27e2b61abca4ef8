//! Stages shared by the subcommands and experiments.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use image::RgbImage;
use rlvs_core::baselines::{gradcam, probability_map};
use rlvs_core::datagen::{Sample, SynthConfig, CANCER};
use rlvs_core::evaluation::{cell_labels, cell_scores, classifier_metrics, roc, AnnotationSet, ClassifierMetrics, RocCurve};
use rlvs_core::explain::{explain_tile, RuleConfig};
use rlvs_core::heatmap::{normalize, plan_grid, render, stitch, Heatmap, NormPolicy, PatchGrid, TileHeatmap};
use rlvs_core::imaging::{batch_tensor, crop, image_to_tensor};
use rlvs_core::nn::{forward, reference_model, ArchConfig, Head, Model};
use rlvs_core::rng::subseed;
use rlvs_core::trainer::{log_csv, predict_labels, train, TrainConfig, TrainOutcome, TrainSet};

/// Patch side every experiment trains on.
pub const PATCH: usize = 32;
/// Cell scoring radius: 25 px at 200-px patches, rescaled to [`PATCH`].
pub const RADIUS: f32 = 4.0;
/// Evaluation tile side (a 6 × 6 patch grid).
pub const TILE: usize = 192;

/// Tumor and normal cells that differ only slightly in size and stain, with few tumor
/// cells per cancer patch.
pub fn subtle_config() -> SynthConfig {
    let mut c = SynthConfig::scaled(PATCH);
    c.tumor_radius = (1.75, 2.05);
    c.normal_radius = (1.4, 1.7);
    c.tumor_density = (1.0, 3.0);
    c.tumor_irregularity = c.normal_irregularity;
    c.tumor_elongation = c.normal_elongation;
    let (t, n) = (c.palette.tumor_nucleus, c.palette.normal_nucleus);
    for k in 0..3 {
        c.palette.tumor_nucleus[k] = 0.8 * n[k] + 0.2 * t[k];
    }
    c.palette.chromatin = 0.0;
    c
}

pub fn arch(head: Head) -> ArchConfig {
    ArchConfig {
        size: PATCH,
        head,
        zero_classifier: true,
        ..Default::default()
    }
}

/// Base training schedule; experiments override the ratio and augmentation.
pub fn train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        lr: 0.05,
        batch_size: 32,
        max_epochs: 5,
        folds: 3,
        seed: subseed(seed, "sampling", 0),
        ..Default::default()
    }
}

/// Initializes the reference network from the `init` substream and trains it.
pub fn fit(samples: &[&Sample], arch: &ArchConfig, cfg: &TrainConfig, seed: u64, name: &str) -> Result<TrainOutcome> {
    let set = TrainSet::from_samples(samples)?;
    let mut model = reference_model(arch, subseed(seed, "init", 0))?;
    model.meta.name = name.into();
    let out = train(&model, &set, cfg).with_context(|| format!("training `{name}`"))?;
    Ok(out)
}

pub fn test_metrics(model: &Model, samples: &[&Sample]) -> Result<ClassifierMetrics> {
    let set = TrainSet::from_samples(samples)?;
    let preds = predict_labels(model, &set)?;
    Ok(classifier_metrics(&preds, &set.labels)?)
}

pub fn predictions(model: &Model, images: &[&RgbImage]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(64) {
        let o = forward(model, &batch_tensor(chunk)?, false)?;
        out.extend((0..chunk.len()).map(|b| rlvs_core::trainer::argmax(o.logits.item(b))));
    }
    Ok(out)
}

pub fn tile_grid() -> PatchGrid {
    plan_grid((TILE, TILE), PATCH, 0.0).expect("tile holds whole patches")
}

/// LRP for the cancer class over every tile; returns stitched maps and the patch maps.
pub fn lrp_tiles(model: &Model, tiles: &[(RgbImage, AnnotationSet)]) -> Result<(Vec<Heatmap>, Vec<Heatmap>)> {
    let grid = tile_grid();
    let rules = RuleConfig::default();
    let mut stitched = Vec::new();
    let mut patches = Vec::new();
    for (img, ann) in tiles {
        let (p, t) = explain_tile(model, img, &grid, CANCER, &rules)?;
        let mut map = t.map;
        map.provenance.tile = Some(ann.tile.clone());
        stitched.push(map);
        patches.extend(p);
    }
    Ok((stitched, patches))
}

pub fn probability_tiles(model: &Model, tiles: &[(RgbImage, AnnotationSet)]) -> Result<Vec<Heatmap>> {
    tiles
        .iter()
        .map(|(img, _)| Ok(probability_map(model, &image_to_tensor(img), PATCH, PATCH, CANCER)?.upsampled))
        .collect()
}

/// Grad-CAM per grid patch, upsampled to the patch and stitched.
pub fn gradcam_tiles(model: &Model, tiles: &[(RgbImage, AnnotationSet)]) -> Result<Vec<Heatmap>> {
    let grid = tile_grid();
    let mut out = Vec::new();
    for (img, _) in tiles {
        let mut maps = Vec::new();
        for &(x, y) in &grid.origins {
            let patch = crop(img, x as u32, y as u32, PATCH as u32, PATCH as u32)?;
            let o = forward(model, &image_to_tensor(&patch), true)?;
            maps.push(gradcam(model, o.trace.as_ref().expect("captured"), 0, CANCER, None)?.upsampled);
        }
        let TileHeatmap { map, .. } = stitch(&maps, &grid)?;
        out.push(map);
    }
    Ok(out)
}

/// Cell-level ROC over all tiles (cancer cells positive, other cells negative).
pub fn cell_roc(maps: &[Heatmap], tiles: &[(RgbImage, AnnotationSet)]) -> Result<RocCurve> {
    let mut samples = Vec::new();
    for (map, (_, ann)) in maps.iter().zip(tiles) {
        samples.extend(cell_labels(&cell_scores(map, ann, RADIUS)?));
    }
    Ok(roc(&samples)?)
}

/// Writes locally normalized overlays and raw heatmap files for every tile.
pub fn write_tile_maps(dir: &Path, tag: &str, maps: &[Heatmap], tiles: &[(RgbImage, AnnotationSet)]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    let mut norm = maps.to_vec();
    normalize(&mut norm, NormPolicy::Local)?;
    for ((raw, n), (img, ann)) in maps.iter().zip(&norm).zip(tiles) {
        let stem = format!("{}_{tag}", ann.tile);
        let raw_path = dir.join(format!("{stem}.rhm"));
        raw.save(&raw_path)?;
        let png = dir.join(format!("{stem}.png"));
        render(n, img, rlvs_core::heatmap::DEFAULT_ALPHA)?.save(&png)?;
        paths.push(raw_path);
        paths.push(png);
    }
    Ok(paths)
}

pub fn write_log(path: &Path, out: &TrainOutcome) -> Result<PathBuf> {
    std::fs::write(path, log_csv(&out.log))?;
    Ok(path.to_path_buf())
}

/// Share of positive relevance inside the `size × size` top-left square.
pub fn corner_share(map: &Heatmap, size: usize) -> f64 {
    let mut inside = 0.0f64;
    let mut total = 0.0f64;
    for y in 0..map.height {
        for x in 0..map.width {
            let v = map.get(x, y).max(0.0) as f64;
            total += v;
            if x < size && y < size {
                inside += v;
            }
        }
    }
    if total > 0.0 {
        inside / total
    } else {
        0.0
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population variance.
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

pub fn tile_config() -> rlvs_core::datagen::TileConfig {
    rlvs_core::datagen::TileConfig {
        width: TILE,
        height: TILE,
        ..Default::default()
    }
}

/// Saves every tile image and its annotations under `dir`.
pub fn write_tiles(dir: &Path, tiles: &[(RgbImage, AnnotationSet)]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (img, ann) in tiles {
        let png = dir.join(format!("{}.png", ann.tile));
        img.save(&png)?;
        let json = dir.join(format!("{}.json", ann.tile));
        ann.save(&json)?;
        paths.push(png);
        paths.push(json);
    }
    Ok(paths)
}

pub fn write_roc(dir: &Path, tag: &str, curve: &RocCurve) -> Result<Vec<PathBuf>> {
    let csv = dir.join(format!("roc_{tag}.csv"));
    curve.save_csv(&csv)?;
    let png = dir.join(format!("roc_{tag}.png"));
    curve.save_plot(&png)?;
    Ok(vec![csv, png])
}

/// Saves `name.json` (manifest) and `name.bin` (weights).
pub fn write_model(dir: &Path, name: &str, model: &Model) -> Result<Vec<PathBuf>> {
    let json = dir.join(format!("{name}.json"));
    rlvs_core::nn::save_model(model, &json)?;
    Ok(vec![json.clone(), json.with_extension("bin")])
}

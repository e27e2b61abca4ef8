//! Necrotic areas appear in training patches of both classes. A model trained with
//! every necrosis-bearing patch removed has never seen necrosis and reacts to it
//! erratically; the full-data model treats it consistently.

use anyhow::Result;
use rlvs_core::datagen::{exclude_samples, generate, generate_tiles, Sample, Split, SynthConfig, TileConfig};
use rlvs_core::evaluation::{region_relevance_comparison, region_rows_csv, RegionClass};
use rlvs_core::heatmap::{normalize, NormPolicy};
use rlvs_core::nn::Head;
use rlvs_core::rng::subseed;
use rlvs_core::trainer::AugmentFlags;

use super::{stage, Ctx};
use crate::pipeline::*;
use crate::report::{Cmp, ExperimentReport, Threshold};

pub const MIN_REGIONS: f64 = 6.0;
pub const MIN_SHARE: f64 = 0.5;

pub fn config() -> SynthConfig {
    SynthConfig {
        necrosis_prob: 0.3,
        ..SynthConfig::scaled(PATCH)
    }
}

pub fn tiles() -> TileConfig {
    TileConfig {
        necrosis: (2, 3),
        ..tile_config()
    }
}

pub(crate) fn run(ctx: &Ctx, report: &mut ExperimentReport) -> Result<()> {
    let cfg = config();
    let data = stage("generate", || Ok(generate(&cfg, ctx.sizes.patches, 0.5, subseed(ctx.seed, "data", 0))?))?;
    let tiles = stage("generate", || Ok(generate_tiles(&cfg, &tiles(), ctx.sizes.tiles, subseed(ctx.seed, "data", 1))?))?;
    let train: Vec<Sample> = data.split(Split::Train).into_iter().cloned().collect();
    let (kept, dropped) = exclude_samples(&train, RegionClass::Necrosis);
    report.input("config_hash", &data.config_hash);
    report.input("class_counts", data.class_counts());
    report.input("excluded_training_patches", dropped);

    let tc = rlvs_core::trainer::TrainConfig {
        max_epochs: ctx.sizes.epochs,
        folds: ctx.sizes.folds,
        augment: AugmentFlags { translate: 4, rotate: true },
        ..train_config(ctx.seed)
    };
    let a = arch(Head::Global);
    let full = stage("train", || fit(&train.iter().collect::<Vec<_>>(), &a, &tc, ctx.seed, "full"))?;
    let excl = stage("train", || fit(&kept.iter().collect::<Vec<_>>(), &a, &tc, ctx.seed, "necrosis-excluded"))?;

    let (mut maps_full, _) = stage("explain", || lrp_tiles(&full.model, &tiles))?;
    let (mut maps_excl, _) = stage("explain", || lrp_tiles(&excl.model, &tiles))?;
    // per-model scale so the two models compare on the same footing
    stage("normalize", || {
        normalize(&mut maps_full, NormPolicy::Global)?;
        normalize(&mut maps_excl, NormPolicy::Global)?;
        Ok(())
    })?;
    let anns: Vec<_> = tiles.iter().map(|(_, a)| a.clone()).collect();
    let rows = stage("evaluate", || {
        Ok(region_relevance_comparison(&maps_excl, &maps_full, &anns, Some(RegionClass::Necrosis))?)
    })?;
    let biased: Vec<f64> = rows.iter().map(|r| r.biased).collect();
    let unbiased: Vec<f64> = rows.iter().map(|r| r.unbiased).collect();
    let higher = rows.iter().filter(|r| r.biased > r.unbiased).count();
    report.metric("regions", rows.len() as f64);
    report.metric("share_excluded_higher", if rows.is_empty() { 0.0 } else { higher as f64 / rows.len() as f64 });
    report.metric("mean_excluded", if rows.is_empty() { 0.0 } else { mean(&biased) });
    report.metric("mean_full", if rows.is_empty() { 0.0 } else { mean(&unbiased) });
    report.metric("variance_excluded", if rows.is_empty() { 0.0 } else { variance(&biased) });
    report.metric("variance_full", if rows.is_empty() { 0.0 } else { variance(&unbiased) });
    for (tag, out) in [("full", &full), ("excluded", &excl)] {
        let m = stage("evaluate", || test_metrics(&out.model, &data.split(Split::Test)))?;
        report.metric(&format!("{tag}_test_accuracy"), m.accuracy);
    }

    stage("write", || {
        let p = ctx.path("necrosis_regions.csv");
        std::fs::write(&p, region_rows_csv(&rows))?;
        report.artifact(&ctx.dir, &p);
        for (tag, maps) in [("full", &maps_full), ("excluded", &maps_excl)] {
            for p in write_tile_maps(&ctx.path("heatmaps"), tag, maps, &tiles)? {
                report.artifact(&ctx.dir, &p);
            }
        }
        for p in write_tiles(&ctx.path("tiles"), &tiles)? {
            report.artifact(&ctx.dir, &p);
        }
        for (tag, out) in [("full", &full), ("excluded", &excl)] {
            report.artifact(&ctx.dir, &write_log(&ctx.path(&format!("train_log_{tag}.csv")), out)?);
        }
        Ok(())
    })?;

    report.check("enough necrosis regions", "regions", Cmp::Ge, Threshold::Value(MIN_REGIONS))?;
    report.check("excluded model higher on necrosis", "share_excluded_higher", Cmp::Ge, Threshold::Value(MIN_SHARE))?;
    report.check("full model steadier", "variance_full", Cmp::Lt, Threshold::Metric("variance_excluded"))?;
    Ok(())
}

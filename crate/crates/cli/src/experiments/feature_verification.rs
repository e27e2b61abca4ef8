//! Train on tumor/non-tumor patches and check that LRP relevance lands on the
//! annotated cancer cells of held-out tiles, next to the coarse baselines.

use anyhow::Result;
use rlvs_core::datagen::{generate, generate_tiles, Split, SynthConfig};
use rlvs_core::evaluation::random_baseline_auc;
use rlvs_core::nn::Head;
use rlvs_core::rng::subseed;
use rlvs_core::trainer::AugmentFlags;

use super::{stage, Ctx};
use crate::pipeline::*;
use crate::report::{Cmp, ExperimentReport, Threshold};

pub const MIN_AUC: f64 = 0.85;

pub(crate) fn run(ctx: &Ctx, report: &mut ExperimentReport) -> Result<()> {
    let cfg = SynthConfig::scaled(PATCH);
    let data = stage("generate", || Ok(generate(&cfg, ctx.sizes.patches, 0.5, subseed(ctx.seed, "data", 0))?))?;
    let tiles = stage("generate", || {
        Ok(generate_tiles(&cfg, &tile_config(), ctx.sizes.tiles, subseed(ctx.seed, "data", 1))?)
    })?;
    report.input("config_hash", &data.config_hash);
    report.input("class_counts", data.class_counts());
    report.input("patch", PATCH);
    report.input("tile", TILE);
    report.input("radius", RADIUS);

    let train = data.split(Split::Train);
    let test = data.split(Split::Test);
    let tc = rlvs_core::trainer::TrainConfig {
        max_epochs: ctx.sizes.epochs,
        folds: ctx.sizes.folds,
        augment: AugmentFlags { translate: 4, rotate: true },
        ..train_config(ctx.seed)
    };
    let out = stage("train", || fit(&train, &arch(Head::Global), &tc, ctx.seed, "tumor"))?;
    report.metric("best_epoch", out.best_epoch as f64);
    let metrics = stage("evaluate", || test_metrics(&out.model, &test))?;
    report.metric("test_accuracy", metrics.accuracy);
    report.metric("test_weighted_f1", metrics.weighted_f1);

    let (lrp_maps, _) = stage("explain", || lrp_tiles(&out.model, &tiles))?;
    let prob_maps = stage("explain", || probability_tiles(&out.model, &tiles))?;
    let cam_maps = stage("explain", || gradcam_tiles(&out.model, &tiles))?;

    stage("evaluate", || {
        for (tag, maps) in [("lrp", &lrp_maps), ("probability_map", &prob_maps), ("gradcam", &cam_maps)] {
            let curve = cell_roc(maps, &tiles)?;
            report.metric(&format!("auc_{tag}"), curve.auc);
            for p in write_roc(&ctx.dir, tag, &curve)? {
                report.artifact(&ctx.dir, &p);
            }
            for p in write_tile_maps(&ctx.path("heatmaps"), tag, maps, &tiles)? {
                report.artifact(&ctx.dir, &p);
            }
        }
        let (_, ann) = &tiles[0];
        let base = random_baseline_auc(ann, (TILE, TILE), RADIUS, 100, subseed(ctx.seed, "baseline", 0))?;
        report.metric("auc_random_mean", base.mean);
        report.metric("auc_random_std", base.std);
        Ok(())
    })?;

    stage("write", || {
        for p in write_model(&ctx.dir, "model", &out.model)? {
            report.artifact(&ctx.dir, &p);
        }
        report.artifact(&ctx.dir, &write_log(&ctx.path("train_log.csv"), &out)?);
        for p in write_tiles(&ctx.path("tiles"), &tiles)? {
            report.artifact(&ctx.dir, &p);
        }
        let csv = ctx.path("test_metrics.csv");
        std::fs::write(&csv, format!("{}\n{}\n", rlvs_core::evaluation::ClassifierMetrics::csv_header(), metrics.csv_row()))?;
        report.artifact(&ctx.dir, &csv);
        Ok(())
    })?;

    report.check("lrp cell-level AUC", "auc_lrp", Cmp::Ge, Threshold::Value(MIN_AUC))?;
    Ok(())
}

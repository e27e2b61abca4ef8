//! Every cancer patch (train and test) carries a small colored square in its top-left
//! corner. The model trained on that data should score perfectly while putting its
//! relevance on the square; a control trained on clean data should not.

use anyhow::Result;
use rlvs_core::datagen::{generate, inject_corner_artifact, Dataset, Split, SynthConfig, ARTIFACT_SIZE, CANCER, DEFAULT_ARTIFACT_COLOR};
use rlvs_core::evaluation::class_average_heatmap;
use rlvs_core::explain::{lrp, RuleConfig};
use rlvs_core::heatmap::{normalize, render_plain, NormPolicy};
use rlvs_core::imaging::batch_tensor;
use rlvs_core::nn::{forward, Head, Model};
use rlvs_core::rng::subseed;
use rlvs_core::trainer::AugmentFlags;

use super::{stage, Ctx};
use crate::pipeline::*;
use crate::report::{Cmp, ExperimentReport, Threshold};

pub const HEAD_POOL: usize = 4;
pub const MIN_ACCURACY: f64 = 0.99;
pub const MIN_BIASED_RATIO: f64 = 10.0;
pub const MAX_CONTROL_RATIO: f64 = 2.0;

/// Class differences kept small so the corner square is the easier cue.
pub fn config() -> SynthConfig {
    subtle_config()
}

fn corrupt(data: &Dataset) -> Result<Dataset> {
    let mut d = data.clone();
    for s in &mut d.samples {
        if s.label == CANCER {
            inject_corner_artifact(&mut s.image, ARTIFACT_SIZE, DEFAULT_ARTIFACT_COLOR)?;
        }
    }
    Ok(d)
}

/// Positive relevance share of the corner for each patch, plus the maps.
fn corner_shares(model: &Model, images: &[&image::RgbImage]) -> Result<(Vec<f64>, Vec<rlvs_core::heatmap::Heatmap>)> {
    let mut maps = Vec::new();
    for chunk in images.chunks(16) {
        let o = forward(model, &batch_tensor(chunk)?, true)?;
        maps.extend(lrp(model, o.trace.as_ref().expect("captured"), CANCER, &RuleConfig::default())?);
    }
    Ok((maps.iter().map(|m| corner_share(m, ARTIFACT_SIZE as usize)).collect(), maps))
}

pub(crate) fn run(ctx: &Ctx, report: &mut ExperimentReport) -> Result<()> {
    let cfg = config();
    let clean = stage("generate", || Ok(generate(&cfg, ctx.sizes.patches, 0.5, subseed(ctx.seed, "data", 0))?))?;
    let dirty = stage("generate", || corrupt(&clean))?;
    report.input("config_hash", &clean.config_hash);
    report.input("class_counts", clean.class_counts());
    report.input("artifact_size", ARTIFACT_SIZE);
    report.input("artifact_color", DEFAULT_ARTIFACT_COLOR);

    let tc = rlvs_core::trainer::TrainConfig {
        max_epochs: ctx.sizes.epochs,
        folds: ctx.sizes.folds,
        augment: AugmentFlags::default(),
        ..train_config(ctx.seed)
    };
    // global pooling would dilute a 5×5 square to a few of 256 positions
    let a = arch(Head::Pooled(HEAD_POOL));
    let biased = stage("train", || fit(&dirty.split(Split::Train), &a, &tc, ctx.seed, "corner-biased"))?;
    let control = stage("train", || fit(&clean.split(Split::Train), &a, &tc, ctx.seed, "corner-control"))?;

    let dirty_test = dirty.split(Split::Test);
    let mb = stage("evaluate", || test_metrics(&biased.model, &dirty_test))?;
    let mc = stage("evaluate", || test_metrics(&control.model, &clean.split(Split::Test)))?;
    report.metric("biased_test_accuracy", mb.accuracy);
    report.metric("control_test_accuracy", mc.accuracy);

    let corrupted: Vec<&image::RgbImage> = dirty_test
        .iter()
        .filter(|s| s.label == CANCER)
        .take(ctx.sizes.explained)
        .map(|s| &s.image)
        .collect();
    report.input("explained_patches", corrupted.len());
    let (sb, maps_b) = stage("explain", || corner_shares(&biased.model, &corrupted))?;
    let (sc, maps_c) = stage("explain", || corner_shares(&control.model, &corrupted))?;
    let area = (ARTIFACT_SIZE * ARTIFACT_SIZE) as f64 / (PATCH * PATCH) as f64;
    report.metric("corner_area_fraction", area);
    report.metric("biased_corner_share", mean(&sb));
    report.metric("control_corner_share", mean(&sc));
    report.metric("biased_corner_ratio", mean(&sb) / area);
    report.metric("control_corner_ratio", mean(&sc) / area);

    stage("write", || {
        for (tag, maps) in [("biased", &maps_b), ("control", &maps_c)] {
            let mut avg = vec![class_average_heatmap(maps, &vec![CANCER; maps.len()], CANCER)?];
            normalize(&mut avg, NormPolicy::Local)?;
            let p = ctx.path(&format!("mean_relevance_{tag}.png"));
            render_plain(&avg[0]).save(&p)?;
            report.artifact(&ctx.dir, &p);
            for (i, m) in maps.iter().take(4).enumerate() {
                let mut one = vec![m.clone()];
                normalize(&mut one, NormPolicy::Local)?;
                let p = ctx.path(&format!("patch{i}_{tag}.png"));
                rlvs_core::heatmap::render(&one[0], corrupted[i], rlvs_core::heatmap::DEFAULT_ALPHA)?.save(&p)?;
                report.artifact(&ctx.dir, &p);
            }
        }
        for (tag, out) in [("biased", &biased), ("control", &control)] {
            for p in write_model(&ctx.dir, &format!("model_{tag}"), &out.model)? {
                report.artifact(&ctx.dir, &p);
            }
            report.artifact(&ctx.dir, &write_log(&ctx.path(&format!("train_log_{tag}.csv")), out)?);
        }
        Ok(())
    })?;

    report.check("biased test accuracy", "biased_test_accuracy", Cmp::Ge, Threshold::Value(MIN_ACCURACY))?;
    report.check("biased corner relevance", "biased_corner_ratio", Cmp::Ge, Threshold::Value(MIN_BIASED_RATIO))?;
    report.check("control corner relevance", "control_corner_ratio", Cmp::Lt, Threshold::Value(MAX_CONTROL_RATIO))?;
    Ok(())
}

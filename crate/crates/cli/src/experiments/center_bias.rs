//! Labels depend only on the cell at the patch center. A position-aware model trained
//! without translation learns to look at the center; a globally pooled control trained
//! with large shifts spreads its relevance. Both are measured on unbiased tiles.

use anyhow::Result;
use rlvs_core::datagen::{generate_center_bias, generate_tiles, Split, SynthConfig};
use rlvs_core::evaluation::center_mass_profile;
use rlvs_core::heatmap::{normalize, render_plain, NormPolicy};
use rlvs_core::nn::Head;
use rlvs_core::rng::subseed;
use rlvs_core::trainer::AugmentFlags;

use super::{stage, Ctx};
use crate::pipeline::*;
use crate::report::{Cmp, ExperimentReport, Threshold};

/// Area share of the centered half-side square.
pub const HALF_AREA: f64 = 0.25;
pub const MIN_BIASED_MASS: f64 = 1.5 * HALF_AREA;
pub const MAX_CONTROL_MASS: f64 = 1.25 * HALF_AREA;
/// Average-pooling window of the position-aware head.
pub const HEAD_POOL: usize = 4;
/// Half the patch side.
pub const CONTROL_SHIFT: usize = PATCH / 2;

const FRACTIONS: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

pub(crate) fn run(ctx: &Ctx, report: &mut ExperimentReport) -> Result<()> {
    let cfg = SynthConfig::scaled(PATCH);
    let data = stage("generate", || Ok(generate_center_bias(&cfg, ctx.sizes.patches, subseed(ctx.seed, "data", 0))?))?;
    let tiles = stage("generate", || {
        Ok(generate_tiles(&cfg, &tile_config(), ctx.sizes.tiles, subseed(ctx.seed, "data", 1))?)
    })?;
    report.input("config_hash", &data.config_hash);
    report.input("class_counts", data.class_counts());
    report.input("biased_head_pool", HEAD_POOL);
    report.input("control_head", "global");
    report.input("control_shift", CONTROL_SHIFT);

    let biased_arch = arch(Head::Pooled(HEAD_POOL));
    let control_arch = arch(Head::Global);
    let base = rlvs_core::trainer::TrainConfig {
        max_epochs: ctx.sizes.epochs,
        folds: ctx.sizes.folds,
        ..train_config(ctx.seed)
    };
    let biased_cfg = rlvs_core::trainer::TrainConfig {
        augment: AugmentFlags { translate: 0, rotate: true },
        ..base.clone()
    };
    let control_cfg = rlvs_core::trainer::TrainConfig {
        augment: AugmentFlags { translate: CONTROL_SHIFT, rotate: true },
        ..base
    };
    let train = data.split(Split::Train);
    let biased = stage("train", || fit(&train, &biased_arch, &biased_cfg, ctx.seed, "center-biased"))?;
    let control = stage("train", || fit(&train, &control_arch, &control_cfg, ctx.seed, "center-control"))?;

    let test = data.split(Split::Test);
    for (tag, out) in [("biased", &biased), ("control", &control)] {
        let m = stage("evaluate", || test_metrics(&out.model, &test))?;
        report.metric(&format!("{tag}_centered_test_accuracy"), m.accuracy);

        let (stitched, patches) = stage("explain", || lrp_tiles(&out.model, &tiles))?;
        let cm = stage("evaluate", || Ok(center_mass_profile(&patches, &FRACTIONS)?))?;
        for (f, v) in FRACTIONS.iter().zip(&cm.profile) {
            report.metric(&format!("{tag}_center_mass_{f:.1}"), *v);
        }
        let curve = stage("evaluate", || cell_roc(&stitched, &tiles))?;
        report.metric(&format!("{tag}_auc"), curve.auc);

        stage("write", || {
            for p in write_roc(&ctx.dir, tag, &curve)? {
                report.artifact(&ctx.dir, &p);
            }
            if let Some(mean_abs) = &cm.mean_abs {
                let mut m = vec![mean_abs.clone()];
                normalize(&mut m, NormPolicy::Local)?;
                let p = ctx.path(&format!("mean_abs_relevance_{tag}.png"));
                render_plain(&m[0]).save(&p)?;
                report.artifact(&ctx.dir, &p);
            }
            let csv = ctx.path(&format!("center_mass_{tag}.csv"));
            let mut s = String::from("fraction,mass\n");
            for (f, v) in FRACTIONS.iter().zip(&cm.profile) {
                s.push_str(&format!("{f},{v}\n"));
            }
            std::fs::write(&csv, s)?;
            report.artifact(&ctx.dir, &csv);
            for p in write_tile_maps(&ctx.path("heatmaps"), tag, &stitched, &tiles)? {
                report.artifact(&ctx.dir, &p);
            }
            for p in write_model(&ctx.dir, &format!("model_{tag}"), &out.model)? {
                report.artifact(&ctx.dir, &p);
            }
            report.artifact(&ctx.dir, &write_log(&ctx.path(&format!("train_log_{tag}.csv")), out)?);
            Ok(())
        })?;
    }

    report.check("biased center mass", "biased_center_mass_0.5", Cmp::Ge, Threshold::Value(MIN_BIASED_MASS))?;
    report.check("control center mass", "control_center_mass_0.5", Cmp::Lt, Threshold::Value(MAX_CONTROL_MASS))?;
    report.check("control AUC above biased", "control_auc", Cmp::Gt, Threshold::Metric("biased_auc"))?;
    Ok(())
}

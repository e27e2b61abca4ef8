//! Imbalanced data trained with 50% and 80% cancer samples per batch, over several
//! seeds. Favouring the cancer class should trade precision for recall.

use anyhow::Result;
use rlvs_core::datagen::{generate, Split, SynthConfig, CANCER};
use rlvs_core::nn::Head;
use rlvs_core::rng::subseed;
use rlvs_core::trainer::AugmentFlags;

use super::{stage, Ctx};
use crate::pipeline::*;
use crate::report::{Cmp, ExperimentReport, Threshold};

pub const RATIOS: [f32; 2] = [0.5, 0.8];
pub const TUMOR_FRACTION: f32 = 0.2;

/// Some cancer patches hold a single tumor cell, so the decision threshold matters.
pub fn config() -> SynthConfig {
    SynthConfig {
        tumor_density: (0.5, 18.0),
        ..SynthConfig::scaled(PATCH)
    }
}

pub const LR: f64 = 0.1;

pub(crate) fn run(ctx: &Ctx, report: &mut ExperimentReport) -> Result<()> {
    let cfg = config();
    report.input("config_hash", cfg.hash());
    report.input("tumor_fraction", TUMOR_FRACTION);
    report.input("ratios", RATIOS);
    report.input("lr", LR);
    let mut rows = String::from("seed,ratio,");
    rows.push_str(rlvs_core::evaluation::ClassifierMetrics::csv_header());
    rows.push('\n');
    let mut recall = [Vec::new(), Vec::new()];
    let mut precision = [Vec::new(), Vec::new()];
    for rep in 0..ctx.sizes.seeds {
        let seed = subseed(ctx.seed, "repeat", rep as u64);
        let data = stage("generate", || Ok(generate(&cfg, ctx.sizes.patches, TUMOR_FRACTION, subseed(seed, "data", 0))?))?;
        for (k, &ratio) in RATIOS.iter().enumerate() {
            let tc = rlvs_core::trainer::TrainConfig {
                ratio,
                lr: LR,
                max_epochs: ctx.sizes.epochs,
                folds: ctx.sizes.folds,
                augment: AugmentFlags { translate: 4, rotate: true },
                ..train_config(seed)
            };
            let out = stage("train", || fit(&data.split(Split::Train), &arch(Head::Global), &tc, seed, "sampling"))?;
            let m = stage("evaluate", || test_metrics(&out.model, &data.split(Split::Test)))?;
            recall[k].push(m.recall[CANCER]);
            precision[k].push(m.precision[CANCER]);
            rows.push_str(&format!("{rep},{ratio},{}\n", m.csv_row()));
        }
    }
    for (k, ratio) in RATIOS.iter().enumerate() {
        report.metric(&format!("recall_{ratio}"), mean(&recall[k]));
        report.metric(&format!("precision_{ratio}"), mean(&precision[k]));
    }
    stage("write", || {
        let p = ctx.path("metrics.csv");
        std::fs::write(&p, rows)?;
        report.artifact(&ctx.dir, &p);
        Ok(())
    })?;
    report.check("recall rises with ratio", "recall_0.8", Cmp::Ge, Threshold::Metric("recall_0.5"))?;
    report.check("precision falls with ratio", "precision_0.8", Cmp::Le, Threshold::Metric("precision_0.5"))?;
    Ok(())
}

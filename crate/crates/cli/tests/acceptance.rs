//! Acceptance criteria 1–10. One test runs them in order so the timings are not
//! disturbed by concurrent criteria; each prints a PASS/FAIL line to stdout.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::io::Write;
use std::time::{Duration, Instant};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rlvs::experiments::{run, Sizes};
use rlvs::ExperimentReport;
use rlvs_core::baselines::{gradcam, gradcam_layer, probability_map};
use rlvs_core::evaluation::{cell_labels, cell_scores, random_baseline_auc, roc, AnnotationSet, CellClass, PointAnnotation};
use rlvs_core::explain::{explain_tile, lrp_state, relevance_conservation, RuleConfig};
use rlvs_core::heatmap::{normalize, plan_grid, stitch, Heatmap, NormPolicy, Provenance};
use rlvs_core::imaging::image_to_tensor;
use rlvs_core::nn::{forward, load_model, reference_model, save_model, ArchConfig, Head};
use support::gradcheck::{check_model, input_targets, param_targets};
use support::random_models::{random_input, random_model, RandomModelOpts};

const CONSERVATION_TOL: f64 = 1e-4;
const GRADIENT_TOL: f64 = 1e-3;
const GRADIENT_SAMPLES: usize = 100;
const RANDOM_AUC_RANGE: (f64, f64) = (0.49, 0.51);
const BASELINE_CELLS: usize = 400;
const BASELINE_RUNS: usize = 100;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn report_line(o: &Outcome) {
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "criterion {:>2} {} {:<28} {:>7.1}s  {}",
        o.id,
        if o.pass { "PASS" } else { "FAIL" },
        o.name,
        o.elapsed.as_secs_f64(),
        o.detail
    )
    .unwrap();
}

fn criterion(id: usize, name: &'static str, budget: Duration, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let t = Instant::now();
    let (pass, mut detail) = f();
    let elapsed = t.elapsed();
    let in_time = elapsed <= budget;
    if !in_time {
        detail.push_str(&format!("; over the {}s budget", budget.as_secs()));
    }
    let o = Outcome {
        id,
        name,
        pass: pass && in_time,
        detail,
        elapsed,
    };
    report_line(&o);
    o
}

fn conservation() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rules = RuleConfig::conserving();
    let mut worst = 0.0f64;
    for m in 0..20 {
        let opts = RandomModelOpts {
            with_bias: false,
            concat: m % 2 == 0,
            global_pool: m % 4 < 2,
        };
        let model = random_model(&mut rng, opts);
        let x = random_input(&mut rng, &model, 5);
        let trace = forward(&model, &x, true).unwrap().trace.unwrap();
        for item in 0..5 {
            let logits = trace.logits().item(item);
            let target = (0..logits.len())
                .max_by(|&a, &b| logits[a].abs().total_cmp(&logits[b].abs()))
                .unwrap();
            let s = lrp_state(&model, &trace, item, target, &rules).unwrap();
            worst = worst.max(relevance_conservation(&s, &model).input_rel_deviation);
        }
    }
    (worst < CONSERVATION_TOL, format!("worst relative deviation {worst:.2e} (< {CONSERVATION_TOL:e})"))
}

fn gradients() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut per_kind: Vec<(&'static str, usize, f64)> = vec![("conv2d", 0, 0.0), ("dense", 0, 0.0), ("input", 0, 0.0)];
    for _ in 0..40 {
        if per_kind.iter().all(|k| k.1 >= GRADIENT_SAMPLES) {
            break;
        }
        let opts = RandomModelOpts {
            with_bias: true,
            concat: rng.gen_bool(0.5),
            global_pool: rng.gen_bool(0.5),
        };
        let model = random_model(&mut rng, opts);
        let x = random_input(&mut rng, &model, 1);
        for (kind, count, worst) in per_kind.iter_mut() {
            if *count >= GRADIENT_SAMPLES {
                continue;
            }
            let targets = if *kind == "input" { input_targets(&model) } else { param_targets(&model, kind) };
            for c in check_model(&mut rng, &model, &x, 30, &targets) {
                *count += 1;
                *worst = worst.max(c.rel_err());
            }
        }
    }
    let pass = per_kind.iter().all(|&(_, n, w)| n >= GRADIENT_SAMPLES && w < GRADIENT_TOL);
    let detail = per_kind
        .iter()
        .map(|(k, n, w)| format!("{k}: {n} checks, worst {w:.1e}"))
        .collect::<Vec<_>>()
        .join("; ");
    (pass, detail)
}

/// A 20 × 20 lattice of cells, every other one cancer.
fn lattice_annotations() -> AnnotationSet {
    let points = (0..BASELINE_CELLS)
        .map(|i| PointAnnotation {
            x: 10.0 + 20.0 * (i % 20) as f32,
            y: 10.0 + 20.0 * (i / 20) as f32,
            class: if (i + i / 20) % 2 == 0 { CellClass::Cancer } else { CellClass::NonCancer },
        })
        .collect();
    AnnotationSet {
        tile: "lattice".into(),
        points,
        regions: vec![],
    }
}

fn roc_baselines() -> (bool, String) {
    let ann = lattice_annotations();
    let constant = Heatmap::filled(400, 400, 0.0);
    let auc = roc(&cell_labels(&cell_scores(&constant, &ann, 8.0).unwrap())).unwrap().auc;
    let random = random_baseline_auc(&ann, (400, 400), 8.0, BASELINE_RUNS, 3).unwrap();
    let pass = auc == 0.5 && (RANDOM_AUC_RANGE.0..=RANDOM_AUC_RANGE.1).contains(&random.mean);
    (
        pass,
        format!(
            "constant AUC {auc}; random mean {:.4} ± {:.4} over {BASELINE_RUNS} runs",
            random.mean, random.std
        ),
    )
}

fn experiment(name: &str) -> (bool, String) {
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let report: ExperimentReport = match run(name, 0, &dir) {
        Ok(r) => r,
        Err(e) => return (false, format!("{e:#}")),
    };
    let detail = report
        .verdicts
        .iter()
        .map(|v| {
            format!(
                "{}{} {:.4} {} {:.4}",
                if v.pass { "" } else { "FAILED " },
                v.metric,
                v.value,
                serde_json::to_value(v.cmp).unwrap().as_str().unwrap(),
                v.threshold_value
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    let sizes = Sizes::standard(name);
    (report.passed(), format!("{detail} [{} patches, {} epochs]", sizes.patches, sizes.epochs))
}

fn resolution() -> (bool, String) {
    let arch = ArchConfig {
        size: 200,
        head: Head::Global,
        ..Default::default()
    };
    let model = reference_model(&arch, 5).unwrap();
    let tile = RgbImage::from_fn(600, 600, |x, y| Rgb([(x % 256) as u8, (y % 256) as u8, ((x + y) % 256) as u8]));
    let prob = probability_map(&model, &image_to_tensor(&tile), 200, 200, 1).unwrap();

    let patch = RgbImage::from_fn(200, 200, |x, y| *tile.get_pixel(x, y));
    let trace = forward(&model, &image_to_tensor(&patch), true).unwrap().trace.unwrap();
    let cam = gradcam(&model, &trace, 0, 1, None).unwrap();
    let last_conv = model.out_shape(gradcam_layer(&model, None).unwrap());

    let grid = plan_grid((600, 600), 200, 0.0).unwrap();
    let (_, lrp) = explain_tile(&model, &tile, &grid, 1, &RuleConfig::default()).unwrap();

    let pass = prob.native_dims() == (3, 3)
        && prob.upsampled.dims() == (600, 600)
        && cam.native_dims() == (last_conv.h, last_conv.w)
        && cam.upsampled.dims() == (200, 200)
        && lrp.map.dims() == (600, 600);
    (
        pass,
        format!(
            "probability {:?}, Grad-CAM {:?} (last conv {}×{}), LRP {:?}",
            prob.native_dims(),
            cam.native_dims(),
            last_conv.h,
            last_conv.w,
            lrp.map.dims()
        ),
    )
}

fn normalization_and_files() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut maps: Vec<Heatmap> = (0..4)
        .map(|i| {
            let scale = 10f32.powi(i - 1);
            Heatmap::new(30, 40, (0..1200).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
        })
        .collect();
    normalize(&mut maps, NormPolicy::Global).unwrap();
    let max = maps.iter().map(Heatmap::max_abs).fold(0.0f32, f32::max);
    let global_ok = max == 1.0;

    let grid = plan_grid((250, 310), 100, 0.3).unwrap();
    let patches = vec![Heatmap::filled(100, 100, 0.7); grid.origins.len()];
    let tile = stitch(&patches, &grid).unwrap();
    let overlapped = tile.coverage.iter().filter(|&&c| c > 1).count();
    let stitch_ok = overlapped > 0 && tile.map.values.iter().all(|&v| v == 0.7);

    // save, load, save again to the same path: both writes must produce the same bytes
    let dir = tempfile::tempdir().unwrap();
    let model = reference_model(&ArchConfig { size: 32, ..Default::default() }, 6).unwrap();
    let m = dir.path().join("model.json");
    let read = |p: &std::path::Path| (std::fs::read(p).unwrap(), std::fs::read(p.with_extension("bin")).unwrap_or_default());
    save_model(&model, &m).unwrap();
    let first = read(&m);
    save_model(&load_model(&m).unwrap(), &m).unwrap();
    let model_ok = read(&m) == first;

    let map = maps[2].clone().with_provenance(Provenance {
        method: "lrp".into(),
        origin: Some((3, 4)),
        ..Default::default()
    });
    let h = dir.path().join("map.rhm");
    map.save(&h).unwrap();
    let first = std::fs::read(&h).unwrap();
    let back = Heatmap::load(&h).unwrap();
    back.save(&h).unwrap();
    let heatmap_ok = std::fs::read(&h).unwrap() == first && back == map;

    (
        global_ok && stitch_ok && model_ok && heatmap_ok,
        format!(
            "global max |v| {max}; constant stitch over {overlapped} overlapped px {}; model files {}; heatmap files {}",
            if stitch_ok { "exact" } else { "changed" },
            if model_ok { "identical" } else { "differ" },
            if heatmap_ok { "identical" } else { "differ" }
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let s = Duration::from_secs;
    let outcomes = [
        criterion(1, "LRP conservation", s(30), conservation),
        criterion(2, "gradient correctness", s(60), gradients),
        criterion(3, "ROC baselines", s(60), roc_baselines),
        criterion(4, "feature verification", s(15 * 60), || experiment("feature-verification")),
        criterion(5, "corner bias", s(10 * 60), || experiment("corner-bias")),
        criterion(6, "center bias", s(15 * 60), || experiment("center-bias")),
        criterion(7, "sampling ratio", s(30 * 60), || experiment("sampling-ratio")),
        criterion(8, "missing class", s(15 * 60), || experiment("missing-class")),
        criterion(9, "resolution contract", s(60), resolution),
        criterion(10, "normalization and files", s(10), normalization_and_files),
    ];
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.pass)
        .map(|o| format!("{} ({})", o.id, o.name))
        .collect();
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}

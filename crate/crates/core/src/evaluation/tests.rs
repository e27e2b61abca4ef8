use super::*;
use crate::error::Error;
use crate::heatmap::Heatmap;
use proptest::prelude::*;

fn pt(x: f32, y: f32, class: CellClass) -> PointAnnotation {
    PointAnnotation { x, y, class }
}

fn square(x0: f32, y0: f32, x1: f32, y1: f32) -> Vec<[f32; 2]> {
    vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
}

/// Counts disc pixels by testing every pixel of the tile.
fn brute_disc(cx: f32, cy: f32, r: f32, w: usize, h: usize) -> usize {
    let mut n = 0;
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - cx as f64, y as f64 - cy as f64);
            if dx * dx + dy * dy <= (r as f64).powi(2) {
                n += 1;
            }
        }
    }
    n
}

#[test]
fn constant_and_rectified_fields() {
    let ann = AnnotationSet {
        points: vec![pt(3.0, 4.0, CellClass::Cancer), pt(0.0, 0.0, CellClass::NonCancer)],
        ..Default::default()
    };
    let s = cell_scores(&Heatmap::filled(10, 10, 1.0), &ann, 2.5).unwrap();
    assert!(s.iter().all(|c| c.score == 1.0));
    let s = cell_scores(&Heatmap::filled(10, 10, -0.5), &ann, 2.5).unwrap();
    assert!(s.iter().all(|c| c.score == 0.0));
}

#[test]
fn single_hot_pixel_matches_brute_force_disc() {
    for (cx, cy, r) in [(50.0, 50.0, 25.0), (3.0, 60.0, 25.0), (20.0, 20.0, 7.5), (0.0, 0.0, 1.0)] {
        let mut map = Heatmap::zeros(100, 100);
        map.set(cx as usize, cy as usize, 1.0);
        let ann = AnnotationSet {
            points: vec![pt(cx, cy, CellClass::Cancer)],
            ..Default::default()
        };
        let s = cell_scores(&map, &ann, r).unwrap();
        let n = brute_disc(cx, cy, r, 100, 100);
        assert_eq!(disc_pixels(cx, cy, r, 100, 100).len(), n);
        assert!((s[0].score - 1.0 / n as f64).abs() < 1e-15, "{} vs 1/{n}", s[0].score);
    }
    assert_eq!(brute_disc(50.0, 50.0, 25.0, 100, 100), 1961);
}

#[test]
fn disc_edge_cases() {
    assert!(matches!(
        cell_scores(
            &Heatmap::zeros(5, 5),
            &AnnotationSet {
                points: vec![pt(1.5, 1.5, CellClass::Cancer)],
                ..Default::default()
            },
            0.5
        ),
        Err(Error::EmptyDisc { .. })
    ));
    assert!(cell_scores(&Heatmap::zeros(5, 5), &AnnotationSet::default(), 0.0).is_err());
    // excluded cells never scored
    let ann = AnnotationSet {
        points: vec![pt(1.0, 1.0, CellClass::Excluded), pt(2.0, 2.0, CellClass::NonCancer)],
        ..Default::default()
    };
    let s = cell_scores(&Heatmap::zeros(5, 5), &ann, 1.0).unwrap();
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].index, 1);
}

#[test]
fn polygons() {
    let sq = square(0.5, 0.5, 3.5, 2.5);
    assert_eq!(polygon_pixels(&sq, 10, 10), vec![(1, 1), (2, 1), (3, 1), (1, 2), (2, 2), (3, 2)]);
    assert!(is_simple(&sq));
    let bowtie = vec![[0.0, 0.0], [4.0, 4.0], [4.0, 0.0], [0.0, 4.0]];
    assert!(!is_simple(&bowtie));
    let tri = vec![[0.0, 0.0], [8.0, 0.0], [0.0, 8.0]];
    assert!(point_in_polygon(&tri, 1.0, 1.0));
    assert!(!point_in_polygon(&tri, 5.0, 5.0));

    let ann = AnnotationSet {
        tile: "t".into(),
        points: vec![pt(1.0, 1.0, CellClass::Cancer)],
        regions: vec![RegionAnnotation {
            class: RegionClass::Necrosis,
            polygon: bowtie,
        }],
    };
    assert!(ann.validate(10, 10).is_err());
    let ok = AnnotationSet {
        regions: vec![RegionAnnotation {
            class: RegionClass::Vessel,
            polygon: sq.clone(),
        }],
        ..ann.clone()
    };
    ok.validate(10, 10).unwrap();
    assert!(ok.validate(3, 10).is_err());
}

#[test]
fn annotation_json_format() {
    let ann = AnnotationSet {
        tile: "tile-3".into(),
        points: vec![pt(1.0, 2.0, CellClass::NonCancer)],
        regions: vec![RegionAnnotation {
            class: RegionClass::Necrosis,
            polygon: square(1.0, 1.0, 3.0, 3.0),
        }],
    };
    let v: serde_json::Value = serde_json::to_value(&ann).unwrap();
    assert_eq!(v["points"][0]["class"], "non-cancer");
    assert_eq!(v["regions"][0]["class"], "necrosis");
    assert_eq!(v["regions"][0]["polygon"][1], serde_json::json!([3.0, 1.0]));
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.json");
    ann.save(&p).unwrap();
    assert_eq!(AnnotationSet::load(&p).unwrap(), ann);
    assert_eq!("vessel".parse::<RegionClass>().unwrap(), RegionClass::Vessel);
    assert!("tumour".parse::<RegionClass>().is_err());
}

/// Fraction of (positive, negative) pairs ordered correctly, ties counting one half.
fn brute_auc(samples: &[(f64, bool)]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for a in samples.iter().filter(|s| s.1) {
        for b in samples.iter().filter(|s| !s.1) {
            den += 1.0;
            num += if a.0 > b.0 {
                1.0
            } else if a.0 == b.0 {
                0.5
            } else {
                0.0
            };
        }
    }
    num / den
}

#[test]
fn roc_examples() {
    let constant: Vec<(f64, bool)> = (0..10).map(|i| (0.0, i % 3 == 0)).collect();
    let r = roc(&constant).unwrap();
    assert_eq!(r.auc, 0.5);
    assert_eq!(r.points, vec![(0.0, 0.0), (1.0, 1.0)]);

    let perfect = [(0.9, true), (0.8, true), (0.1, false), (0.2, false)];
    assert_eq!(roc(&perfect).unwrap().auc, 1.0);

    let half = [(0.8, true), (0.2, true), (0.5, false)];
    let r = roc(&half).unwrap();
    assert_eq!(r.auc, 0.5);
    assert_eq!(r.points, vec![(0.0, 0.0), (0.0, 0.5), (1.0, 0.5), (1.0, 1.0)]);
    assert_eq!((r.positives, r.negatives), (2, 1));

    assert!(matches!(roc(&[(0.1, true), (0.3, true)]), Err(Error::SingleClass)));
    assert!(matches!(roc(&[]), Err(Error::SingleClass)));
}

#[test]
fn roc_labels_as_scores() {
    let labels: Vec<bool> = (0..20).map(|i| i % 4 == 1).collect();
    let direct: Vec<(f64, bool)> = labels.iter().map(|&l| (l as u8 as f64, l)).collect();
    let inverted: Vec<(f64, bool)> = labels.iter().map(|&l| (!l as u8 as f64, l)).collect();
    assert_eq!(roc(&direct).unwrap().auc, 1.0);
    assert_eq!(roc(&inverted).unwrap().auc, 0.0);
}

#[test]
fn roc_plot_and_csv() {
    let r = roc(&[(0.8, true), (0.2, true), (0.5, false)]).unwrap();
    assert!(r.to_csv().starts_with("fpr,tpr\n0,0\n0,0.5\n"));
    let a = r.plot(128);
    assert_eq!(a.dimensions(), (128, 128));
    assert_eq!(a, r.plot(128));
}

#[test]
fn random_baseline() {
    let points: Vec<PointAnnotation> = (0..200)
        .map(|i| {
            pt(
                (10 + (i % 20) * 9) as f32,
                (10 + (i / 20) * 9) as f32,
                if i % 2 == 0 { CellClass::Cancer } else { CellClass::NonCancer },
            )
        })
        .collect();
    let ann = AnnotationSet {
        points,
        ..Default::default()
    };
    let b = random_baseline_auc(&ann, (200, 200), 4.0, 100, 9).unwrap();
    assert!((b.mean - 0.5).abs() < 0.05, "{}", b.mean);
    assert!(b.std > 0.0);

    let a1 = random_baseline_auc(&ann, (200, 200), 4.0, 2, 5).unwrap();
    let a2 = random_baseline_auc(&ann, (200, 200), 4.0, 2, 5).unwrap();
    assert_eq!(a1, a2);

    let pair = AnnotationSet {
        points: vec![pt(2.0, 2.0, CellClass::Cancer), pt(7.0, 7.0, CellClass::NonCancer)],
        ..Default::default()
    };
    let b = random_baseline_auc(&pair, (10, 10), 1.0, 20, 1).unwrap();
    assert!(b.aucs.iter().all(|a| [0.0, 0.5, 1.0].contains(a)));
    assert!(random_baseline_auc(&pair, (10, 10), 1.0, 1, 1).is_err());
}

#[test]
fn classifier_metric_examples() {
    let m = classifier_metrics(&[1, 0, 1, 0], &[1, 0, 1, 0]).unwrap();
    assert_eq!(m.weighted_f1, 1.0);
    assert_eq!(m.confusion, [[2, 0], [0, 2]]);

    let m = classifier_metrics(&[1, 1, 1, 0], &[1, 1, 0, 0]).unwrap();
    assert!((m.f1[1] - 0.8).abs() < 1e-12);
    assert!((m.f1[0] - 2.0 / 3.0).abs() < 1e-12);
    assert!((m.weighted_f1 - 0.733_333_333_333).abs() < 1e-9);
    assert_eq!(m.support, [2, 2]);

    let m = classifier_metrics(&[1, 1, 1, 1], &[1, 0, 1, 0]).unwrap();
    assert_eq!(m.recall, [0.0, 1.0]);
    assert_eq!(m.precision[0], 0.0);

    assert!(classifier_metrics(&[], &[]).is_err());
    assert!(classifier_metrics(&[1], &[1, 0]).is_err());
    assert!(classifier_metrics(&[2], &[1]).is_err());
}

#[test]
fn center_mass_examples() {
    let uniform = vec![Heatmap::filled(8, 8, -0.3)];
    let c = center_mass_profile(&uniform, &[0.5, 1.0]).unwrap();
    assert!((c.profile[0] - 0.25).abs() < 1e-12);
    assert!((c.profile[1] - 1.0).abs() < 1e-12);

    let mut point = Heatmap::zeros(9, 9);
    point.set(4, 4, 2.0);
    let c = center_mass_profile(&[point], &[0.1, 0.2, 0.5, 1.0]).unwrap();
    assert_eq!(c.profile, vec![1.0; 4]);

    let m = center_mass_profile(&[Heatmap::filled(4, 4, 1.0), Heatmap::filled(4, 4, 3.0)], &[0.5]).unwrap();
    assert_eq!(m.mean_abs.unwrap().values, vec![2.0; 16]);
    let z = center_mass_profile(&[Heatmap::zeros(4, 4), Heatmap::filled(4, 4, 1.0)], &[0.5]).unwrap();
    assert_eq!(z.skipped, 1);
    assert_eq!(z.profile, vec![0.25]);

    assert!(center_mass_profile(&[], &[0.5]).is_err());
    assert!(center_mass_profile(&uniform, &[0.0]).is_err());
    assert!(center_mass_profile(&uniform, &[1.5]).is_err());
}

#[test]
fn class_average_examples() {
    let m = Heatmap::new(1, 3, vec![0.5, -1.0, 0.25]).unwrap();
    assert_eq!(class_average_heatmap(&[m.clone()], &[1], 1).unwrap().values, m.values);
    let neg = Heatmap::new(1, 3, m.values.iter().map(|v| -v).collect()).unwrap();
    assert!(class_average_heatmap(&[m.clone(), neg], &[1, 1], 1)
        .unwrap()
        .values
        .iter()
        .all(|&v| v == 0.0));
    let avg = class_average_heatmap(
        &[Heatmap::filled(2, 2, 0.2), Heatmap::filled(2, 2, 0.4), Heatmap::filled(2, 2, 9.0)],
        &[0, 0, 1],
        0,
    )
    .unwrap();
    assert!(avg.values.iter().all(|v| (v - 0.3).abs() < 1e-6));
    assert!(class_average_heatmap(&[m], &[0], 1).is_err());
}

#[test]
fn region_comparison_examples() {
    let ann = AnnotationSet {
        tile: "t0".into(),
        points: vec![],
        regions: vec![
            RegionAnnotation {
                class: RegionClass::Necrosis,
                polygon: square(0.5, 0.5, 3.5, 3.5),
            },
            RegionAnnotation {
                class: RegionClass::Necrosis,
                polygon: square(5.5, 5.5, 8.5, 8.5),
            },
        ],
    };
    let mut biased = Heatmap::zeros(10, 10);
    for y in 1..=3 {
        for x in 1..=3 {
            biased.set(x, y, 0.8);
        }
    }
    let zeros = Heatmap::zeros(10, 10);
    let rows = region_relevance_comparison(&[biased.clone()], &[zeros.clone()], &[ann.clone()], None).unwrap();
    assert_eq!(rows.len(), 2);
    assert!((rows[0].biased - 0.8).abs() < 1e-6);
    assert_eq!(rows[1].biased, 0.0);
    assert!(rows.iter().all(|r| r.unbiased == 0.0));
    assert_eq!(rows[0].area, 9);

    let same = region_relevance_comparison(&[biased.clone()], &[biased.clone()], &[ann.clone()], None).unwrap();
    assert!(same.iter().all(|r| r.biased == r.unbiased));
    assert!(region_relevance_comparison(&[biased.clone()], &[zeros.clone()], &[ann.clone()], Some(RegionClass::Vessel))
        .unwrap()
        .is_empty());
    assert!(region_rows_csv(&rows).starts_with("tile,region,class,area,biased,unbiased\nt0,0,necrosis,9,"));

    let outside = AnnotationSet {
        regions: vec![RegionAnnotation {
            class: RegionClass::Necrosis,
            polygon: square(5.0, 5.0, 12.0, 12.0),
        }],
        ..ann
    };
    assert!(region_relevance_comparison(&[biased], &[zeros], &[outside], None).is_err());
}

fn samples() -> impl Strategy<Value = Vec<(f64, bool)>> {
    prop::collection::vec((0u8..8, any::<bool>()), 2..40)
        .prop_map(|v| v.into_iter().map(|(s, l)| (s as f64 / 4.0, l)).collect())
}

proptest! {
    #[test]
    fn auc_matches_pair_count_and_trapezoid(s in samples()) {
        prop_assume!(s.iter().any(|x| x.1) && s.iter().any(|x| !x.1));
        let r = roc(&s).unwrap();
        prop_assert!((r.auc - brute_auc(&s)).abs() < 1e-12);
        prop_assert!((r.auc - r.trapezoid_auc()).abs() < 1e-12);
        prop_assert_eq!(r.points[0], (0.0, 0.0));
        prop_assert_eq!(*r.points.last().unwrap(), (1.0, 1.0));
        for w in r.points.windows(2) {
            prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
    }

    #[test]
    fn auc_is_rank_invariant(s in samples()) {
        prop_assume!(s.iter().any(|x| x.1) && s.iter().any(|x| !x.1));
        let t: Vec<(f64, bool)> = s.iter().map(|&(v, l)| ((3.0 * v).exp() - 7.0, l)).collect();
        prop_assert_eq!(roc(&s).unwrap().auc, roc(&t).unwrap().auc);
    }

    #[test]
    fn cell_scores_are_monotone(vals in prop::collection::vec(-1.0f32..1.0, 64), bump in prop::collection::vec(0.0f32..1.0, 64)) {
        let a = Heatmap::new(8, 8, vals.clone()).unwrap();
        let b = Heatmap::new(8, 8, vals.iter().zip(&bump).map(|(v, d)| v + d).collect()).unwrap();
        let ann = AnnotationSet {
            points: vec![pt(2.0, 3.0, CellClass::Cancer), pt(6.5, 6.0, CellClass::NonCancer)],
            regions: vec![RegionAnnotation { class: RegionClass::Artifact, polygon: square(0.5, 0.5, 4.5, 2.5) }],
            ..Default::default()
        };
        let sa = cell_scores(&a, &ann, 2.0).unwrap();
        let sb = cell_scores(&b, &ann, 2.0).unwrap();
        for (x, y) in sa.iter().zip(&sb) {
            prop_assert!(y.score >= x.score);
        }
    }

    #[test]
    fn center_mass_is_monotone(vals in prop::collection::vec(-1.0f32..1.0, 100)) {
        let m = Heatmap::new(10, 10, vals).unwrap();
        let fr: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let c = center_mass_profile(&[m], &fr).unwrap();
        for w in c.profile.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12);
        }
    }

    #[test]
    fn weighted_f1_between_class_f1(p in prop::collection::vec(0usize..2, 1..30), l in prop::collection::vec(0usize..2, 30)) {
        let l = &l[..p.len()];
        let m = classifier_metrics(&p, l).unwrap();
        let (lo, hi) = (m.f1[0].min(m.f1[1]), m.f1[0].max(m.f1[1]));
        prop_assert!(m.weighted_f1 >= lo - 1e-12 && m.weighted_f1 <= hi + 1e-12);
    }
}

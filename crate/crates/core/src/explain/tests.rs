use super::*;
use crate::nn::{forward, Layer, ModelMeta, INPUT};

fn dense_net(weights: Vec<f32>, bias: Vec<f32>, n_in: usize, n_out: usize) -> Model {
    let mut d = Layer::new(
        "fc",
        LayerKind::Dense {
            in_features: n_in,
            out_features: n_out,
        },
        &[INPUT],
    );
    d.weights = weights;
    d.bias = bias;
    Model::new(ModelMeta::default(), Shape::new(1, n_in, 1, 1), n_out, vec![d]).unwrap()
}

fn trace_of(model: &Model, x: Vec<f32>) -> ForwardTrace {
    let s = model.input_shape();
    forward(model, &Tensor::from_vec(s, x).unwrap(), true).unwrap().trace.unwrap()
}

#[test]
fn dense_epsilon_hand_example() {
    let m = dense_net(vec![1.0, 1.0], vec![0.0], 2, 1);
    let t = trace_of(&m, vec![2.0, 2.0]);
    let s = lrp_state(&m, &t, 0, 0, &RuleConfig::default()).unwrap();
    assert_eq!(s.output_relevance, 4.0);
    // 2 * 4 / (4 + 1)
    for &r in s.input.data() {
        assert!((r - 1.6).abs() < 1e-6, "{r}");
    }
}

#[test]
fn conv_alpha_beta_hand_example() {
    let mut c = Layer::new(
        "conv",
        LayerKind::Conv2d {
            in_channels: 2,
            out_channels: 1,
            kernel: 1,
            stride: 1,
            padding: 0,
        },
        &[INPUT],
    );
    c.weights = vec![1.0, -1.0];
    let m = Model::new(ModelMeta::default(), Shape::new(1, 2, 1, 1), 1, vec![c]).unwrap();
    let t = trace_of(&m, vec![3.0, 1.0]);
    let s = lrp_state(&m, &t, 0, 0, &RuleConfig::default()).unwrap();
    assert_eq!(s.output_relevance, 2.0);
    let r = s.input.data();
    assert!((r[0] - 2.0).abs() < 1e-6 && r[1] == 0.0, "{r:?}");
    let report = relevance_conservation(&s, &m);
    assert!(report.input_rel_deviation < 1e-6);
}

#[test]
fn alpha_beta_on_dense_matches_manual_split() {
    let w = vec![2.0, 1.0, -1.0, -3.0];
    let m = dense_net(w.clone(), vec![0.0, 0.0], 2, 2);
    let x = [1.0f32, -2.0];
    let t = trace_of(&m, x.to_vec());
    let rules = RuleConfig {
        rules: RuleAssignment {
            dense: Rule::AlphaBeta,
            ..Default::default()
        },
        alpha: 2.0,
        beta: 1.0,
        ..RuleConfig::conserving()
    };
    for target in 0..2 {
        let s = lrp_state(&m, &t, 0, target, &rules).unwrap();
        let zij: Vec<f32> = (0..2).map(|i| x[i] * w[target * 2 + i]).collect();
        let zp: f32 = zij.iter().filter(|z| **z > 0.0).sum();
        let zn: f32 = zij.iter().filter(|z| **z < 0.0).sum();
        let r_out = s.output_relevance;
        for i in 0..2 {
            let want = r_out
                * (2.0 * zij[i].max(0.0) / zp - if zn < 0.0 { zij[i].min(0.0) / zn } else { 0.0 });
            assert!((s.input.data()[i] - want).abs() < 1e-5, "{target} {i}");
        }
        assert!((s.input.sum() - r_out as f64).abs() < 1e-5);
    }
}

#[test]
fn zero_input_gives_zero_relevance() {
    let m = dense_net(vec![0.5, -0.25, 1.0, 2.0], vec![0.0, 0.0], 2, 2);
    let t = trace_of(&m, vec![0.0, 0.0]);
    for rules in [RuleConfig::default(), RuleConfig::conserving()] {
        let s = lrp_state(&m, &t, 0, 1, &rules).unwrap();
        assert!(s.input.data().iter().all(|&v| v == 0.0));
        let rep = relevance_conservation(&s, &m);
        assert_eq!(rep.output, 0.0);
        assert!(rep.layers.iter().all(|l| l.sum == 0.0));
    }
}

#[test]
fn epsilon_zero_conserves_and_positive_epsilon_shrinks() {
    let m = dense_net(vec![0.3, 0.7, 1.2], vec![0.0], 3, 1);
    let t = trace_of(&m, vec![1.0, 2.0, 0.5]);
    let exact = lrp_state(&m, &t, 0, 0, &RuleConfig::conserving()).unwrap();
    assert!((exact.input.sum() - exact.output_relevance as f64).abs() < 1e-6);
    let mut prev = exact.input.sum();
    for eps in [0.01, 0.5, 1.0, 10.0] {
        let rules = RuleConfig {
            epsilon: eps,
            ..RuleConfig::conserving()
        };
        let s = lrp_state(&m, &t, 0, 0, &rules).unwrap();
        let sum = s.input.sum();
        assert!(sum.abs() <= s.output_relevance as f64 + 1e-6);
        assert!(sum < prev);
        prev = sum;
    }
}

#[test]
fn included_positive_bias_leaks() {
    let m = dense_net(vec![0.5, 0.5], vec![1.0], 2, 1);
    let t = trace_of(&m, vec![1.0, 3.0]);
    let inc = lrp_state(
        &m,
        &t,
        0,
        0,
        &RuleConfig {
            epsilon: 0.0,
            ..Default::default()
        },
    )
    .unwrap();
    // z = 2, b = 1, R_out = 3 → ΣR_in = 3 · 2 / 3
    assert!((inc.input.sum() - 2.0).abs() < 1e-6);
    let exc = lrp_state(&m, &t, 0, 0, &RuleConfig::conserving()).unwrap();
    assert!((exc.input.sum() - 3.0).abs() < 1e-6);
}

fn pooled_net() -> Model {
    let mut c = Layer::new(
        "conv",
        LayerKind::Conv2d {
            in_channels: 1,
            out_channels: 1,
            kernel: 1,
            stride: 1,
            padding: 0,
        },
        &[INPUT],
    );
    c.weights = vec![1.0];
    let layers = vec![
        c,
        Layer::new("relu", LayerKind::Relu, &["conv"]),
        Layer::new("pool", LayerKind::MaxPool { kernel: 2, stride: 2 }, &["relu"]),
        Layer::new("flat", LayerKind::Flatten, &["pool"]),
        {
            let mut d = Layer::new(
                "fc",
                LayerKind::Dense {
                    in_features: 4,
                    out_features: 2,
                },
                &["flat"],
            );
            d.weights = vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 0.5, 0.5];
            d
        },
    ];
    Model::new(ModelMeta::default(), Shape::new(1, 1, 4, 4), 2, layers).unwrap()
}

#[test]
fn maxpool_routes_to_winner_and_relu_passes_through() {
    let m = pooled_net();
    #[rustfmt::skip]
    let x = vec![
        1.0, 5.0, 0.5, 0.5,
        2.0, 3.0, 0.5, 0.5,
        -1.0, -2.0, 4.0, 0.0,
        -3.0, 0.2, 1.0, 9.0,
    ];
    let t = trace_of(&m, x);
    let s = lrp_state(&m, &t, 0, 0, &RuleConfig::conserving()).unwrap();
    let pool = s.layers[2].as_ref().unwrap().data().to_vec();
    let relu = s.layers[1].as_ref().unwrap().data().to_vec();
    let conv = s.layers[0].as_ref().unwrap().data().to_vec();
    assert_eq!(relu, conv);
    // winners: (1,0), first of the tied 0.5s at (2,0), (1,2) with 0.2, (3,3)
    let winners = [1usize, 2, 13, 15];
    for (o, &at) in winners.iter().enumerate() {
        assert_eq!(relu[at], pool[o]);
    }
    for (i, &v) in relu.iter().enumerate() {
        if !winners.contains(&i) {
            assert_eq!(v, 0.0, "position {i}");
        }
    }
    let rep = relevance_conservation(&s, &m);
    assert!(rep.max_rel_deviation() < 1e-5, "{rep:?}");
}

#[test]
fn zero_target_logit_gives_zero_everywhere() {
    let mut m = pooled_net();
    let (meta, shape, classes, mut layers) = m.into_parts();
    for w in &mut layers[4].weights[..4] {
        *w = 0.0;
    }
    m = Model::new(meta, shape, classes, layers).unwrap();
    let t = trace_of(&m, (0..16).map(|i| i as f32).collect());
    let s = lrp_state(&m, &t, 0, 0, &RuleConfig::default()).unwrap();
    let rep = relevance_conservation(&s, &m);
    assert_eq!(rep.output, 0.0);
    assert!(rep.layers.iter().all(|l| l.sum == 0.0));
    assert_eq!(rep.input_sum, 0.0);
}

#[test]
fn rejects_bad_target_and_foreign_trace() {
    let m = pooled_net();
    let t = trace_of(&m, vec![1.0; 16]);
    assert!(lrp_state(&m, &t, 0, 2, &RuleConfig::default()).is_err());
    assert!(lrp_state(&m, &t, 1, 0, &RuleConfig::default()).is_err());
    let other = dense_net(vec![1.0, 1.0], vec![0.0], 2, 1);
    assert!(lrp(&other, &t, 0, &RuleConfig::default()).is_err());
    let bad = RuleConfig {
        epsilon: -1.0,
        ..Default::default()
    };
    assert!(lrp(&m, &t, 0, &bad).is_err());
    assert!(RuleConfig { alpha: 2.0, ..Default::default() }.validate_conserving().is_err());
    assert!(RuleConfig { alpha: 2.0, beta: 1.0, ..Default::default() }.validate_conserving().is_ok());
}

#[test]
fn lrp_heatmap_carries_provenance() {
    let m = pooled_net();
    let t = trace_of(&m, (0..16).map(|i| (i as f32 - 5.0) / 3.0).collect());
    let maps = lrp(&m, &t, 1, &RuleConfig::default()).unwrap();
    assert_eq!(maps.len(), 1);
    assert_eq!(maps[0].dims(), (4, 4));
    assert_eq!(maps[0].provenance.method, "lrp");
    assert_eq!(maps[0].provenance.target_class, Some(1));
}

#[test]
fn channel_collapse_examples() {
    let r = Tensor::filled(Shape::new(1, 3, 2, 2), 0.1);
    let h = channel_collapse(&r);
    assert!(h.values.iter().all(|&v| (v - 0.3).abs() < 1e-6));

    let mut r = Tensor::zeros(Shape::new(1, 3, 2, 3));
    for y in 0..2 {
        for x in 0..3 {
            r.set(0, 0, y, x, 1.0);
            r.set(0, 1, y, x, -1.0);
        }
    }
    assert!(channel_collapse(&r).values.iter().all(|&v| v == 0.0));

    let vals: Vec<f32> = (0..3 * 5 * 4).map(|i| ((i * 37) % 23) as f32 / 7.0 - 1.5).collect();
    let r = Tensor::from_vec(Shape::new(1, 3, 5, 4), vals.clone()).unwrap();
    let h = channel_collapse(&r);
    for p in 0..20 {
        let want = (vals[p] + vals[20 + p]) + vals[40 + p];
        assert_eq!(h.values[p], want);
    }
    assert!((h.sum() - r.sum()).abs() < 1e-5);
}

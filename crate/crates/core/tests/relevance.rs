mod support;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rlvs_core::explain::{lrp_state, relevance_conservation, Rule, RuleAssignment, RuleConfig};
use rlvs_core::nn::{forward, LayerKind};
use support::random_models::{random_input, random_model, RandomModelOpts};

const NO_BIAS: RandomModelOpts = RandomModelOpts {
    with_bias: false,
    concat: false,
    global_pool: false,
};

#[test]
fn conservation_on_random_bias_free_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rules = RuleConfig::conserving();
    let mut worst = 0.0f64;
    for m_i in 0..20 {
        let opts = RandomModelOpts {
            concat: m_i % 2 == 0,
            ..NO_BIAS
        };
        let model = random_model(&mut rng, opts);
        let x = random_input(&mut rng, &model, 5);
        let trace = forward(&model, &x, true).unwrap().trace.unwrap();
        for item in 0..5 {
            let logits = trace.logits().item(item);
            // conservation is measured against a logit large enough to dominate f32 noise
            let target = (0..logits.len())
                .max_by(|&a, &b| logits[a].abs().total_cmp(&logits[b].abs()))
                .unwrap();
            let s = lrp_state(&model, &trace, item, target, &rules).unwrap();
            let rep = relevance_conservation(&s, &model);
            assert!(
                rep.input_rel_deviation < 1e-4,
                "model {m_i} item {item}: {rep:?}"
            );
            worst = worst.max(rep.input_rel_deviation);
        }
    }
    println!("worst input deviation {worst:.2e}");
}

#[test]
fn all_alpha_beta_relevance_is_non_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let rules = RuleConfig {
        rules: RuleAssignment {
            dense: Rule::AlphaBeta,
            conv: Rule::AlphaBeta,
            pool: Rule::AlphaBeta,
        },
        ..RuleConfig::default()
    };
    let mut checked = 0;
    for _ in 0..20 {
        let model = random_model(
            &mut rng,
            RandomModelOpts {
                with_bias: true,
                ..NO_BIAS
            },
        );
        let x = random_input(&mut rng, &model, 3);
        let trace = forward(&model, &x, true).unwrap().trace.unwrap();
        for item in 0..3 {
            let logits = trace.logits().item(item);
            for target in 0..logits.len() {
                if logits[target] < 0.0 {
                    continue;
                }
                let s = lrp_state(&model, &trace, item, target, &rules).unwrap();
                for r in s.layers.iter().flatten().chain(std::iter::once(&s.input)) {
                    assert!(r.data().iter().all(|&v| v >= 0.0));
                }
                checked += 1;
            }
        }
    }
    assert!(checked > 20);
}

#[test]
fn relu_relevance_is_pass_through() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10 {
        let model = random_model(&mut rng, NO_BIAS);
        let x = random_input(&mut rng, &model, 1);
        let trace = forward(&model, &x, true).unwrap().trace.unwrap();
        let s = lrp_state(&model, &trace, 0, 0, &RuleConfig::default()).unwrap();
        for (idx, layer) in model.layers().iter().enumerate() {
            if layer.kind != LayerKind::Relu {
                continue;
            }
            let rlvs_core::nn::Source::Layer(p) = model.sources(idx)[0] else {
                continue;
            };
            assert_eq!(model.consumers(p), &[idx]);
            assert_eq!(s.layers[p].as_ref().unwrap().data(), s.layers[idx].as_ref().unwrap().data());
        }
    }
}

#[test]
fn included_positive_biases_leak_relevance() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..10 {
        let mut model = random_model(&mut rng, NO_BIAS);
        for (w, b) in model.params_mut() {
            w.iter_mut().for_each(|v| *v = v.abs());
            b.iter_mut().for_each(|v| *v = rng.gen_range(0.01..0.3));
        }
        let x = random_input(&mut rng, &model, 1).map(f32::abs);
        let trace = forward(&model, &x, true).unwrap().trace.unwrap();
        let s = lrp_state(&model, &trace, 0, 0, &RuleConfig::default()).unwrap();
        let rep = relevance_conservation(&s, &model);
        assert!(rep.output > 0.0);
        assert!(rep.input_sum <= rep.output, "{rep:?}");
        assert!(rep.input_sum >= 0.0);
    }
}

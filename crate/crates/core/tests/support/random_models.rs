//! Random small graphs covering every layer kind.

use rand::Rng;
use rlvs_core::nn::{LayerKind, Model, ModelBuilder, INPUT};
use rlvs_core::{Shape, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct RandomModelOpts {
    pub with_bias: bool,
    /// Force an inception-style concat block.
    pub concat: bool,
    /// Force a global-average-pool head (otherwise random between gap and flatten).
    pub global_pool: bool,
}

pub fn random_model<R: Rng>(rng: &mut R, opts: RandomModelOpts) -> Model {
    let size = rng.gen_range(6..=10usize);
    let c0 = rng.gen_range(1..=3usize);
    let classes = rng.gen_range(2..=4usize);
    let mut b = ModelBuilder::new("random", Shape::new(1, c0, size, size), classes);

    let c1 = rng.gen_range(2..=4usize);
    let k1 = if rng.gen_bool(0.5) { 3 } else { 1 };
    let stride1 = if rng.gen_bool(0.25) { 2 } else { 1 };
    let pad1 = if k1 == 3 && rng.gen_bool(0.7) { 1 } else { 0 };
    b.conv("conv1", INPUT, c0, c1, k1, stride1, pad1).relu("relu1", "conv1");
    let mut h = (size + 2 * pad1 - k1) / stride1 + 1;
    let mut last = "relu1".to_string();
    if h >= 4 {
        match rng.gen_range(0..3) {
            0 => {
                b.layer("pool1", LayerKind::MaxPool { kernel: 2, stride: 2 }, &[&last]);
                last = "pool1".into();
                h = (h - 2) / 2 + 1;
            }
            1 => {
                b.layer("pool1", LayerKind::AvgPool { kernel: 2, stride: 2 }, &[&last]);
                last = "pool1".into();
                h = (h - 2) / 2 + 1;
            }
            _ => {}
        }
    }
    let mut channels = c1;
    if opts.concat || rng.gen_bool(0.5) {
        let ca = rng.gen_range(1..=3usize);
        let cb = rng.gen_range(1..=3usize);
        b.conv("br_a", &last, channels, ca, 1, 1, 0)
            .relu("br_a_relu", "br_a")
            .conv("br_b", &last, channels, cb, 3, 1, 1)
            .relu("br_b_relu", "br_b")
            .layer("mixed", LayerKind::Concat, &["br_a_relu", "br_b_relu"]);
        last = "mixed".into();
        channels = ca + cb;
    }
    let c3 = rng.gen_range(2..=4usize);
    b.conv("conv3", &last, channels, c3, 3, 1, 1).relu("relu3", "conv3");
    if opts.global_pool || rng.gen_bool(0.5) {
        b.layer("gap", LayerKind::GlobalAvgPool, &["relu3"]).dense("fc", "gap", c3, classes);
    } else {
        b.layer("flat", LayerKind::Flatten, &["relu3"])
            .dense("fc", "flat", c3 * h * h, classes);
    }
    let mut m = b.build(rng.gen()).expect("random model is valid");
    if opts.with_bias {
        for (_, bias) in m.params_mut() {
            for v in bias.iter_mut() {
                *v = rng.gen_range(-0.2..0.2);
            }
        }
    }
    m
}

pub fn random_input<R: Rng>(rng: &mut R, model: &Model, batch: usize) -> Tensor {
    let s = model.input_shape().with_batch(batch);
    Tensor::from_vec(s, (0..s.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

//! Naive f64 forward pass over a `Model`, written with direct loops and no shared
//! kernels. Used as the finite-difference oracle for gradient checks.

#![allow(dead_code)]

use rlvs_core::nn::{LayerKind, Model, Source};

/// Per-item activations in f64, plus a record of every data-dependent branch
/// (ReLU signs and maxpool winners) so callers can reject kink-crossing perturbations.
pub struct RefPass {
    pub logits: Vec<f64>,
    pub pattern: Vec<u32>,
}

pub struct RefParams {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl RefParams {
    pub fn from_model(model: &Model) -> Self {
        RefParams {
            weights: model
                .layers()
                .iter()
                .map(|l| l.weights.iter().map(|&v| v as f64).collect())
                .collect(),
            bias: model
                .layers()
                .iter()
                .map(|l| l.bias.iter().map(|&v| v as f64).collect())
                .collect(),
        }
    }
}

/// Runs one item `(c, h, w)` through the model graph.
pub fn ref_forward(model: &Model, params: &RefParams, input: &[f64]) -> RefPass {
    let mut outs: Vec<Vec<f64>> = Vec::new();
    let mut pattern = Vec::new();
    let logits_layer = model.logits_layer();
    for idx in 0..=logits_layer {
        let layer = model.layer(idx);
        let src = |s: Source, outs: &Vec<Vec<f64>>| -> Vec<f64> {
            match s {
                Source::Input => input.to_vec(),
                Source::Layer(i) => outs[i].clone(),
            }
        };
        let srcs = model.sources(idx);
        let xs = model.source_shape(srcs[0]);
        let ys = model.out_shape(idx);
        let x = src(srcs[0], &outs);
        let mut y = vec![0.0f64; ys.item_len()];
        match layer.kind {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let w = &params.weights[idx];
                let b = &params.bias[idx];
                for o in 0..out_channels {
                    for oy in 0..ys.h {
                        for ox in 0..ys.w {
                            let mut s = b[o];
                            for c in 0..in_channels {
                                for ky in 0..kernel {
                                    for kx in 0..kernel {
                                        let iy = (oy * stride + ky) as isize - padding as isize;
                                        let ix = (ox * stride + kx) as isize - padding as isize;
                                        if iy < 0 || ix < 0 || iy >= xs.h as isize || ix >= xs.w as isize {
                                            continue;
                                        }
                                        s += x[(c * xs.h + iy as usize) * xs.w + ix as usize]
                                            * w[((o * in_channels + c) * kernel + ky) * kernel + kx];
                                    }
                                }
                            }
                            y[(o * ys.h + oy) * ys.w + ox] = s;
                        }
                    }
                }
            }
            LayerKind::Dense {
                in_features,
                out_features,
            } => {
                let w = &params.weights[idx];
                for j in 0..out_features {
                    y[j] = params.bias[idx][j]
                        + (0..in_features).map(|i| w[j * in_features + i] * x[i]).sum::<f64>();
                }
            }
            LayerKind::Relu => {
                for (o, v) in y.iter_mut().zip(&x) {
                    pattern.push((*v > 0.0) as u32);
                    *o = v.max(0.0);
                }
            }
            LayerKind::MaxPool { kernel, stride } => {
                for c in 0..xs.c {
                    for oy in 0..ys.h {
                        for ox in 0..ys.w {
                            let mut best = f64::NEG_INFINITY;
                            let mut at = 0;
                            for ky in 0..kernel {
                                for kx in 0..kernel {
                                    let i = (c * xs.h + oy * stride + ky) * xs.w + ox * stride + kx;
                                    if x[i] > best {
                                        best = x[i];
                                        at = i;
                                    }
                                }
                            }
                            pattern.push(at as u32);
                            y[(c * ys.h + oy) * ys.w + ox] = best;
                        }
                    }
                }
            }
            LayerKind::AvgPool { kernel, stride } => {
                for c in 0..xs.c {
                    for oy in 0..ys.h {
                        for ox in 0..ys.w {
                            let mut s = 0.0;
                            for ky in 0..kernel {
                                for kx in 0..kernel {
                                    s += x[(c * xs.h + oy * stride + ky) * xs.w + ox * stride + kx];
                                }
                            }
                            y[(c * ys.h + oy) * ys.w + ox] = s / (kernel * kernel) as f64;
                        }
                    }
                }
            }
            LayerKind::GlobalAvgPool => {
                let hw = xs.h * xs.w;
                for c in 0..xs.c {
                    y[c] = x[c * hw..(c + 1) * hw].iter().sum::<f64>() / hw as f64;
                }
            }
            LayerKind::Concat => {
                y.clear();
                for &s in srcs {
                    y.extend(src(s, &outs));
                }
            }
            LayerKind::Flatten => y = x,
            LayerKind::Softmax => unreachable!(),
        }
        outs.push(y);
    }
    RefPass {
        logits: outs[logits_layer].clone(),
        pattern,
    }
}

/// `L = Σ_k c_k · logit_k` on one item.
pub fn ref_loss(model: &Model, params: &RefParams, input: &[f64], coeffs: &[f64]) -> (f64, Vec<u32>) {
    let p = ref_forward(model, params, input);
    (
        p.logits.iter().zip(coeffs).map(|(a, b)| a * b).sum(),
        p.pattern,
    )
}

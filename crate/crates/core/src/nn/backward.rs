use super::forward::{conv_geom, ForwardTrace};
use super::layer::LayerKind;
use super::model::{Model, Source};
use super::ops;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Parameter gradients of one layer, summed over the batch. Empty for parameter-free layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub input: Tensor,
    pub params: Vec<ParamGrad>,
    /// Gradient with respect to each layer's output, when requested.
    pub outputs: Option<Vec<Tensor>>,
}

#[derive(Debug, Clone, Copy)]
pub struct BackwardOptions {
    pub params: bool,
    pub keep_output_grads: bool,
}

impl Default for BackwardOptions {
    fn default() -> Self {
        BackwardOptions {
            params: true,
            keep_output_grads: false,
        }
    }
}

/// Backpropagates `output_grad` (gradient of a scalar with respect to the logits).
pub fn backward(model: &Model, trace: &ForwardTrace, output_grad: &Tensor) -> Result<Gradients> {
    backward_with(model, trace, output_grad, BackwardOptions::default())
}

pub fn backward_with(
    model: &Model,
    trace: &ForwardTrace,
    output_grad: &Tensor,
    opts: BackwardOptions,
) -> Result<Gradients> {
    trace.check(model)?;
    let b = trace.batch();
    let logits_layer = trace.logits_layer;
    if output_grad.shape() != trace.logits().shape() {
        return Err(Error::TraceMismatch(format!(
            "output gradient {} does not match logits {}",
            output_grad.shape(),
            trace.logits().shape()
        )));
    }

    let mut grads: Vec<Option<Tensor>> = vec![None; model.len()];
    grads[logits_layer] = Some(output_grad.clone());
    let mut input_grad = Tensor::zeros(trace.input.shape());
    let mut params: Vec<ParamGrad> = model
        .layers()
        .iter()
        .map(|l| {
            let (nw, nb) = if opts.params { l.kind.param_lens() } else { (0, 0) };
            ParamGrad {
                weights: vec![0.0; nw],
                bias: vec![0.0; nb],
            }
        })
        .collect();
    let mut col = Vec::new();
    let mut dcol = Vec::new();

    for idx in (0..=logits_layer).rev() {
        let Some(dy) = grads[idx].take() else {
            continue;
        };
        let layer = model.layer(idx);
        let srcs = model.sources(idx).to_vec();
        // gradient contributions for each source, in source order
        let mut contributions: Vec<Tensor> = Vec::with_capacity(srcs.len());
        let x = trace.source(srcs[0]);

        match layer.kind {
            LayerKind::Conv2d { .. } => {
                let (g, oc) = conv_geom(model, idx).unwrap();
                let mut dx = Tensor::zeros(x.shape());
                let pg = &mut params[idx];
                for item in 0..b {
                    let dyi = dy.item(item);
                    if opts.params {
                        ops::im2col(x.item(item), &g, &mut col);
                        ops::gemm_nt_acc(dyi, &col, &mut pg.weights, oc, g.cols(), g.rows());
                        for (o, chunk) in dyi.chunks(g.cols()).enumerate() {
                            pg.bias[o] += chunk.iter().sum::<f32>();
                        }
                    }
                    ops::conv_transpose_add(dyi, &layer.weights, &g, oc, &mut dcol, dx.item_mut(item));
                }
                contributions.push(dx);
            }
            LayerKind::Dense {
                in_features,
                out_features,
            } => {
                let mut dx = Tensor::zeros(x.shape());
                let pg = &mut params[idx];
                for item in 0..b {
                    let xi = x.item(item);
                    let dyi = dy.item(item);
                    let dxi = dx.item_mut(item);
                    for j in 0..out_features {
                        let g = dyi[j];
                        let row = &layer.weights[j * in_features..(j + 1) * in_features];
                        for (d, w) in dxi.iter_mut().zip(row) {
                            *d += g * w;
                        }
                        if opts.params {
                            let grow = &mut pg.weights[j * in_features..(j + 1) * in_features];
                            for (gw, xv) in grow.iter_mut().zip(xi) {
                                *gw += g * xv;
                            }
                            pg.bias[j] += g;
                        }
                    }
                }
                contributions.push(dx);
            }
            LayerKind::Relu => {
                let mut dx = dy.clone();
                for (d, &z) in dx.data_mut().iter_mut().zip(x.data()) {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                }
                contributions.push(dx);
            }
            LayerKind::MaxPool { .. } => {
                let arg = trace.argmax[idx].as_ref().unwrap();
                let per = dy.shape().item_len();
                let mut dx = Tensor::zeros(x.shape());
                for item in 0..b {
                    let dyi = dy.item(item);
                    let dxi = dx.item_mut(item);
                    for (o, &g) in dyi.iter().enumerate() {
                        dxi[arg[item * per + o] as usize] += g;
                    }
                }
                contributions.push(dx);
            }
            LayerKind::AvgPool { kernel, stride } => {
                let xs = x.shape();
                let ys = dy.shape();
                let inv = 1.0 / (kernel * kernel) as f32;
                let mut dx = Tensor::zeros(xs);
                for item in 0..b {
                    let dyi = dy.item(item);
                    let dxi = dx.item_mut(item);
                    for c in 0..xs.c {
                        for oy in 0..ys.h {
                            for ox in 0..ys.w {
                                let g = dyi[(c * ys.h + oy) * ys.w + ox] * inv;
                                for ky in 0..kernel {
                                    let row = (c * xs.h + oy * stride + ky) * xs.w + ox * stride;
                                    for d in &mut dxi[row..row + kernel] {
                                        *d += g;
                                    }
                                }
                            }
                        }
                    }
                }
                contributions.push(dx);
            }
            LayerKind::GlobalAvgPool => {
                let xs = x.shape();
                let hw = xs.h * xs.w;
                let inv = 1.0 / hw as f32;
                let mut dx = Tensor::zeros(xs);
                for item in 0..b {
                    let dyi = dy.item(item);
                    let dxi = dx.item_mut(item);
                    for c in 0..xs.c {
                        let g = dyi[c] * inv;
                        dxi[c * hw..(c + 1) * hw].iter_mut().for_each(|d| *d = g);
                    }
                }
                contributions.push(dx);
            }
            LayerKind::Concat => {
                let mut offset = 0;
                for &src in &srcs {
                    let part_shape = trace.source(src).shape();
                    let n = part_shape.item_len();
                    let mut dx = Tensor::zeros(part_shape);
                    for item in 0..b {
                        dx.item_mut(item)
                            .copy_from_slice(&dy.item(item)[offset..offset + n]);
                    }
                    offset += n;
                    contributions.push(dx);
                }
            }
            LayerKind::Flatten => {
                contributions.push(Tensor::from_vec(x.shape(), dy.data().to_vec())?);
            }
            LayerKind::Softmax => unreachable!("softmax lies after the logits layer"),
        }

        for (src, dx) in srcs.iter().zip(contributions) {
            match *src {
                Source::Input => accumulate(&mut input_grad, &dx),
                Source::Layer(p) => match grads[p].as_mut() {
                    Some(g) => accumulate(g, &dx),
                    None => grads[p] = Some(dx),
                },
            }
        }
        if opts.keep_output_grads {
            grads[idx] = Some(dy);
        }
    }

    let outputs = if opts.keep_output_grads {
        Some(
            grads
                .into_iter()
                .enumerate()
                .map(|(i, g)| g.unwrap_or_else(|| Tensor::zeros(model.out_shape(i).with_batch(b))))
                .collect(),
        )
    } else {
        None
    };
    Ok(Gradients {
        input: input_grad,
        params,
        outputs,
    })
}

fn accumulate(dst: &mut Tensor, src: &Tensor) {
    for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += s;
    }
}

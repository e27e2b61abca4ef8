use super::layer::LayerKind;
use super::model::{Model, Source};
use super::ops::{self, ConvGeom};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Everything a backward or relevance pass needs, recorded during one forward pass.
///
/// `outputs[l]` is the output of layer `l`; for conv and dense layers this is the
/// pre-activation `z_j = Σ_i x_i w_ij + b_j` (nonlinearities are separate layers).
/// Layer inputs are the outputs of their producers (or `input`).
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Tensor,
    pub outputs: Vec<Tensor>,
    /// Per maxpool layer: for every pooled output position, the flat per-item index
    /// (`c·h·w` layout) of the winning input.
    pub argmax: Vec<Option<Vec<u32>>>,
    pub logits_layer: usize,
}

impl ForwardTrace {
    pub fn batch(&self) -> usize {
        self.input.shape().b
    }

    pub fn source(&self, src: Source) -> &Tensor {
        match src {
            Source::Input => &self.input,
            Source::Layer(i) => &self.outputs[i],
        }
    }

    pub fn logits(&self) -> &Tensor {
        &self.outputs[self.logits_layer]
    }

    /// Checks the trace was recorded on a model with this structure.
    pub fn check(&self, model: &Model) -> Result<()> {
        if self.outputs.len() != model.len() || self.argmax.len() != model.len() {
            return Err(Error::TraceMismatch(format!(
                "trace covers {} layers, model has {}",
                self.outputs.len(),
                model.len()
            )));
        }
        let b = self.batch();
        if self.input.shape() != model.input_shape().with_batch(b) {
            return Err(Error::TraceMismatch("input shape differs".into()));
        }
        for (i, out) in self.outputs.iter().enumerate() {
            if out.shape() != model.out_shape(i).with_batch(b) {
                return Err(Error::TraceMismatch(format!(
                    "output of `{}` has shape {}, expected {}",
                    model.layer(i).name,
                    out.shape(),
                    model.out_shape(i).with_batch(b)
                )));
            }
            let is_max = matches!(model.layer(i).kind, LayerKind::MaxPool { .. });
            if is_max != self.argmax[i].is_some() {
                return Err(Error::TraceMismatch(format!(
                    "argmax record missing or spurious at `{}`",
                    model.layer(i).name
                )));
            }
        }
        if self.logits_layer != model.logits_layer() {
            return Err(Error::TraceMismatch("logits layer differs".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `(batch, classes, 1, 1)`.
    pub logits: Tensor,
    pub trace: Option<ForwardTrace>,
}

pub(crate) fn conv_geom(model: &Model, idx: usize) -> Option<(ConvGeom, usize)> {
    if let LayerKind::Conv2d {
        out_channels,
        kernel,
        stride,
        padding,
        ..
    } = model.layer(idx).kind
    {
        let x = model.source_shape(model.sources(idx)[0]);
        let y = model.out_shape(idx);
        Some((
            ConvGeom {
                c: x.c,
                h: x.h,
                w: x.w,
                k: kernel,
                stride,
                pad: padding,
                oh: y.h,
                ow: y.w,
            },
            out_channels,
        ))
    } else {
        None
    }
}

/// Runs the model on a batch. With `capture`, every layer output is kept in the trace.
pub fn forward(model: &Model, input: &Tensor, capture: bool) -> Result<ForwardOutput> {
    let s = input.shape();
    if s.with_batch(1) != model.input_shape() {
        return Err(Error::shape(
            "input",
            format!(
                "input {s} does not match declared input {}",
                model.input_shape()
            ),
        ));
    }
    if !input.all_finite() {
        return Err(Error::invalid("input contains non-finite values"));
    }
    let b = s.b;
    let mut outputs: Vec<Option<Tensor>> = vec![None; model.len()];
    let mut argmax: Vec<Option<Vec<u32>>> = vec![None; model.len()];
    // remaining consumer count, to free intermediates when not capturing
    let mut pending: Vec<usize> = (0..model.len()).map(|i| model.consumers(i).len()).collect();
    let logits_layer = model.logits_layer();
    let mut col = Vec::new();

    for idx in 0..model.len() {
        let layer = model.layer(idx);
        let out_shape = model.out_shape(idx).with_batch(b);
        let srcs = model.sources(idx);
        let x = fetch(input, &outputs, srcs[0]);
        let mut y = Tensor::zeros(out_shape);
        match layer.kind {
            LayerKind::Conv2d { .. } => {
                let (g, oc) = conv_geom(model, idx).unwrap();
                for item in 0..b {
                    ops::conv_forward(
                        x.item(item),
                        &layer.weights,
                        Some(&layer.bias),
                        &g,
                        oc,
                        &mut col,
                        y.item_mut(item),
                    );
                }
            }
            LayerKind::Dense {
                in_features,
                out_features,
            } => {
                for item in 0..b {
                    let xi = x.item(item);
                    let yi = y.item_mut(item);
                    for j in 0..out_features {
                        let row = &layer.weights[j * in_features..(j + 1) * in_features];
                        yi[j] = ops::dot(row, xi) + layer.bias[j];
                    }
                }
            }
            LayerKind::Relu => {
                for (o, &v) in y.data_mut().iter_mut().zip(x.data()) {
                    *o = if v > 0.0 { v } else { 0.0 };
                }
            }
            LayerKind::MaxPool { kernel, stride } => {
                let xs = x.shape();
                let mut arg = vec![0u32; out_shape.item_len() * b];
                let per = out_shape.item_len();
                for item in 0..b {
                    let xi = x.item(item);
                    let yi = y.item_mut(item);
                    for c in 0..xs.c {
                        for oy in 0..out_shape.h {
                            for ox in 0..out_shape.w {
                                let mut best = f32::NEG_INFINITY;
                                let mut best_at = 0usize;
                                for ky in 0..kernel {
                                    for kx in 0..kernel {
                                        let at = (c * xs.h + oy * stride + ky) * xs.w
                                            + ox * stride
                                            + kx;
                                        // strict comparison: first maximum in row-major order wins
                                        if xi[at] > best {
                                            best = xi[at];
                                            best_at = at;
                                        }
                                    }
                                }
                                let o = (c * out_shape.h + oy) * out_shape.w + ox;
                                yi[o] = best;
                                arg[item * per + o] = best_at as u32;
                            }
                        }
                    }
                }
                argmax[idx] = Some(arg);
            }
            LayerKind::AvgPool { kernel, stride } => {
                let xs = x.shape();
                let inv = 1.0 / (kernel * kernel) as f32;
                for item in 0..b {
                    let xi = x.item(item);
                    let yi = y.item_mut(item);
                    for c in 0..xs.c {
                        for oy in 0..out_shape.h {
                            for ox in 0..out_shape.w {
                                let mut sum = 0.0f32;
                                for ky in 0..kernel {
                                    let row = (c * xs.h + oy * stride + ky) * xs.w + ox * stride;
                                    for v in &xi[row..row + kernel] {
                                        sum += v;
                                    }
                                }
                                yi[(c * out_shape.h + oy) * out_shape.w + ox] = sum * inv;
                            }
                        }
                    }
                }
            }
            LayerKind::GlobalAvgPool => {
                let xs = x.shape();
                let hw = xs.h * xs.w;
                let inv = 1.0 / hw as f32;
                for item in 0..b {
                    let xi = x.item(item);
                    let yi = y.item_mut(item);
                    for c in 0..xs.c {
                        let sum: f32 = xi[c * hw..(c + 1) * hw].iter().sum();
                        yi[c] = sum * inv;
                    }
                }
            }
            LayerKind::Concat => {
                let parts: Vec<&Tensor> = srcs.iter().map(|&s| fetch(input, &outputs, s)).collect();
                for item in 0..b {
                    let yi = y.item_mut(item);
                    let mut at = 0;
                    for p in &parts {
                        let pi = p.item(item);
                        yi[at..at + pi.len()].copy_from_slice(pi);
                        at += pi.len();
                    }
                }
            }
            LayerKind::Flatten => {
                y.data_mut().copy_from_slice(x.data());
            }
            LayerKind::Softmax => {
                for item in 0..b {
                    let xi = x.item(item).to_vec();
                    ops::softmax_row(&xi, y.item_mut(item));
                }
            }
        }
        outputs[idx] = Some(y);
        if !capture {
            for &src in srcs {
                if let Source::Layer(i) = src {
                    pending[i] -= 1;
                    if pending[i] == 0 && i != logits_layer {
                        outputs[i] = None;
                    }
                }
            }
        }
    }

    let logits = outputs[logits_layer].clone().expect("logits computed");
    let trace = if capture {
        Some(ForwardTrace {
            input: input.clone(),
            outputs: outputs.into_iter().map(|o| o.expect("captured")).collect(),
            argmax,
            logits_layer,
        })
    } else {
        None
    };
    Ok(ForwardOutput { logits, trace })
}

fn fetch<'a>(input: &'a Tensor, outputs: &'a [Option<Tensor>], src: Source) -> &'a Tensor {
    match src {
        Source::Input => input,
        Source::Layer(i) => outputs[i].as_ref().expect("producer output available"),
    }
}

/// Class probabilities per batch item, computed in max-shifted form.
pub fn softmax_probs(logits: &Tensor) -> Tensor {
    let s = logits.shape();
    let mut out = Tensor::zeros(s);
    for item in 0..s.b {
        let row = logits.item(item).to_vec();
        ops::softmax_row(&row, out.item_mut(item));
    }
    out
}

/// Convenience: logits for a single image tensor `(1, c, h, w)`.
pub fn predict(model: &Model, input: &Tensor) -> Result<Vec<f32>> {
    Ok(forward(model, input, false)?.logits.into_vec())
}

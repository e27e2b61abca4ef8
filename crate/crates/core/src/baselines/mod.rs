//! Coarse explanation baselines: per-patch class probabilities and Grad-CAM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::{Heatmap, Provenance};
use crate::nn::{backward_with, forward, softmax_probs, BackwardOptions, ForwardTrace, LayerKind, Model, Source};
use crate::tensor::{Shape, Tensor};

/// Patches per forward call in [`probability_map`].
const PATCH_BATCH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseMethod {
    ProbabilityMap,
    Gradcam,
}

impl CoarseMethod {
    pub fn tag(self) -> &'static str {
        match self {
            CoarseMethod::ProbabilityMap => "probability_map",
            CoarseMethod::Gradcam => "gradcam",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseMap {
    pub method: CoarseMethod,
    pub target: usize,
    /// Native grid, `grid.height × grid.width`.
    pub grid: Heatmap,
    /// Grid upsampled to the input size.
    pub upsampled: Heatmap,
}

impl CoarseMap {
    pub fn native_dims(&self) -> (usize, usize) {
        self.grid.dims()
    }

    fn provenance(&self, model: &str) -> Provenance {
        Provenance {
            method: self.method.tag().into(),
            model: model.into(),
            target_class: Some(self.target),
            ..Default::default()
        }
    }
}

fn new_coarse(method: CoarseMethod, target: usize, model: &Model, grid: Heatmap, upsampled: Heatmap) -> CoarseMap {
    let mut m = CoarseMap {
        method,
        target,
        grid,
        upsampled,
    };
    let p = m.provenance(&model.meta.name);
    m.grid.provenance = p.clone();
    m.upsampled.provenance = p;
    m
}

/// Class probability of every `patch × patch` window at multiples of `stride`,
/// upsampled to the tile by nearest neighbour.
pub fn probability_map(model: &Model, tile: &Tensor, patch: usize, stride: usize, target: usize) -> Result<CoarseMap> {
    let ts = tile.shape();
    let ms = model.input_shape();
    if ts.b != 1 || ts.c != ms.c {
        return Err(Error::invalid(format!("tile tensor {ts} does not match model input {ms}")));
    }
    if (ms.h, ms.w) != (patch, patch) {
        return Err(Error::invalid(format!(
            "model takes {}×{} inputs, patch size is {patch}",
            ms.h, ms.w
        )));
    }
    if target >= model.class_count() {
        return Err(Error::invalid(format!("target class {target} out of range")));
    }
    if stride == 0 || ts.h < patch || ts.w < patch {
        return Err(Error::invalid(format!(
            "empty patch grid: tile {}×{}, patch {patch}, stride {stride}",
            ts.h, ts.w
        )));
    }
    let gh = (ts.h - patch) / stride + 1;
    let gw = (ts.w - patch) / stride + 1;
    let origins: Vec<(usize, usize)> = (0..gh)
        .flat_map(|i| (0..gw).map(move |j| (j * stride, i * stride)))
        .collect();

    let data = tile.data();
    let mut probs = Vec::with_capacity(origins.len());
    for chunk in origins.chunks(PATCH_BATCH) {
        let mut batch = Tensor::zeros(ms.with_batch(chunk.len()));
        for (b, &(ox, oy)) in chunk.iter().enumerate() {
            let item = batch.item_mut(b);
            for c in 0..ms.c {
                for y in 0..patch {
                    let src = (c * ts.h + oy + y) * ts.w + ox;
                    let dst = (c * patch + y) * patch;
                    item[dst..dst + patch].copy_from_slice(&data[src..src + patch]);
                }
            }
        }
        let out = forward(model, &batch, false)?;
        let p = softmax_probs(&out.logits);
        for b in 0..chunk.len() {
            probs.push(p.item(b)[target]);
        }
    }
    let grid = Heatmap::new(gh, gw, probs)?;
    let up = upsample_nearest(&grid, ts.h, ts.w, stride);
    Ok(new_coarse(CoarseMethod::ProbabilityMap, target, model, grid, up))
}

/// Pixel `(x, y)` takes grid cell `(min(x / stride, gw − 1), min(y / stride, gh − 1))`.
pub fn upsample_nearest(grid: &Heatmap, height: usize, width: usize, stride: usize) -> Heatmap {
    let mut out = Heatmap::zeros(height, width);
    for y in 0..height {
        let gy = (y / stride).min(grid.height - 1);
        for x in 0..width {
            let gx = (x / stride).min(grid.width - 1);
            out.set(x, y, grid.get(gx, gy));
        }
    }
    out
}

/// Bilinear resize with half-pixel centers; border samples are clamped.
pub fn upsample_bilinear(grid: &Heatmap, height: usize, width: usize) -> Heatmap {
    let coord = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f32) {
        let s = ((dst as f32 + 0.5) * src_len as f32 / dst_len as f32 - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(src_len - 1);
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, s - i0 as f32)
    };
    let mut out = Heatmap::zeros(height, width);
    for y in 0..height {
        let (y0, y1, fy) = coord(y, grid.height, height);
        for x in 0..width {
            let (x0, x1, fx) = coord(x, grid.width, width);
            let top = grid.get(x0, y0) * (1.0 - fx) + grid.get(x1, y0) * fx;
            let bottom = grid.get(x0, y1) * (1.0 - fx) + grid.get(x1, y1) * fx;
            out.set(x, y, top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// `ReLU(Σ_k w_k · A_k)` with `w_k` the spatial mean of the gradient of channel `k`.
/// `features` and `grads` are one `(c, h, w)` item each.
pub fn gradcam_combine(features: &[f32], grads: &[f32], channels: usize, height: usize, width: usize) -> Vec<f32> {
    let plane = height * width;
    let mut map = vec![0.0f32; plane];
    for k in 0..channels {
        let g = &grads[k * plane..(k + 1) * plane];
        let w = (g.iter().map(|&v| v as f64).sum::<f64>() / plane as f64) as f32;
        if w == 0.0 {
            continue;
        }
        for (m, a) in map.iter_mut().zip(&features[k * plane..(k + 1) * plane]) {
            *m += w * a;
        }
    }
    for m in &mut map {
        *m = m.max(0.0);
    }
    map
}

/// Resolves the Grad-CAM layer. `None` picks the last convolution, read after its
/// ReLU when that is the only consumer.
pub fn gradcam_layer(model: &Model, layer: Option<&str>) -> Result<usize> {
    let idx = match layer {
        Some(name) => model
            .layer_index(name)
            .ok_or_else(|| Error::invalid(format!("no layer named `{name}`")))?,
        None => {
            let conv = model
                .last_conv()
                .ok_or_else(|| Error::invalid("model has no convolutional layer"))?;
            match model.consumers(conv) {
                [next] if model.layer(*next).kind == LayerKind::Relu => *next,
                _ => conv,
            }
        }
    };
    let s = model.out_shape(idx);
    let flat = matches!(
        model.layer(idx).kind,
        LayerKind::Dense { .. } | LayerKind::Flatten | LayerKind::GlobalAvgPool | LayerKind::Softmax
    );
    if flat || s.h * s.w <= 1 {
        return Err(Error::invalid(format!(
            "layer `{}` has no spatial dimensions",
            model.layer(idx).name
        )));
    }
    Ok(idx)
}

/// Grad-CAM for batch item `item` of the trace.
pub fn gradcam(model: &Model, trace: &ForwardTrace, item: usize, target: usize, layer: Option<&str>) -> Result<CoarseMap> {
    trace.check(model)?;
    if target >= model.class_count() {
        return Err(Error::invalid(format!("target class {target} out of range")));
    }
    if item >= trace.batch() {
        return Err(Error::invalid(format!("batch item {item} out of range")));
    }
    let idx = gradcam_layer(model, layer)?;
    let mut seed = Tensor::zeros(trace.logits().shape());
    seed.item_mut(item)[target] = 1.0;
    let g = backward_with(
        model,
        trace,
        &seed,
        BackwardOptions {
            params: false,
            keep_output_grads: true,
        },
    )?;
    let grads = g.outputs.expect("output gradients requested");
    let s: Shape = model.out_shape(idx);
    let features = trace.source(Source::Layer(idx)).item(item);
    let map = gradcam_combine(features, grads[idx].item(item), s.c, s.h, s.w);
    let grid = Heatmap::new(s.h, s.w, map)?;
    let input = model.input_shape();
    let up = upsample_bilinear(&grid, input.h, input.w);
    Ok(new_coarse(CoarseMethod::Gradcam, target, model, grid, up))
}

//! Layer-wise relevance propagation.
//!
//! Relevance starts at the target logit and is redistributed layer by layer down to
//! the input pixels. Dense layers use the ε-rule
//!
//! ```text
//! R_i = Σ_j  z_ij / (z_j + ε·sign(z_j)) · R_j,      z_ij = x_i·w_ij,  z_j = Σ_i z_ij (+ b_j)
//! ```
//!
//! and convolution and average-pooling layers use the αβ-rule
//!
//! ```text
//! R_i = Σ_j (α · z⁺_ij / Σ_i' z⁺_i'j  −  β · z⁻_ij / Σ_i' z⁻_i'j) · R_j
//! ```
//!
//! ReLU passes relevance through unchanged, max pooling routes it to the recorded
//! winner, and concatenation splits it by channel position.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use image::RgbImage;

use crate::heatmap::{stitch, Heatmap, PatchGrid, Provenance, TileHeatmap};
use crate::imaging::{batch_tensor, crop};
use crate::nn::{conv_geom, forward, ops, ForwardTrace, LayerKind, Model, Source};
use crate::tensor::{Shape, Tensor};

/// Denominator stabilizer of the αβ-rule; a neuron with no positive (negative)
/// contributions redistributes nothing through that term.
const AB_STABILIZER: f32 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Epsilon,
    AlphaBeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasMode {
    /// Bias enters `z_j` (its positive/negative part enters the αβ sums); the bias
    /// share of relevance is dropped.
    IncludeInDenominator,
    Exclude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleAssignment {
    pub dense: Rule,
    pub conv: Rule,
    pub pool: Rule,
}

impl Default for RuleAssignment {
    fn default() -> Self {
        RuleAssignment {
            dense: Rule::Epsilon,
            conv: Rule::AlphaBeta,
            pool: Rule::AlphaBeta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleConfig {
    pub epsilon: f32,
    pub alpha: f32,
    pub beta: f32,
    pub rules: RuleAssignment,
    pub bias_mode: BiasMode,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            epsilon: 1.0,
            alpha: 1.0,
            beta: 0.0,
            rules: RuleAssignment::default(),
            bias_mode: BiasMode::IncludeInDenominator,
        }
    }
}

impl RuleConfig {
    /// ε = 0, α = 1, β = 0, biases excluded: every layer conserves relevance.
    pub fn conserving() -> Self {
        RuleConfig {
            epsilon: 0.0,
            bias_mode: BiasMode::Exclude,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::invalid(format!("epsilon must be ≥ 0, got {}", self.epsilon)));
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::invalid("alpha and beta must be finite"));
        }
        Ok(())
    }

    /// Additionally requires `α − β = 1`.
    pub fn validate_conserving(&self) -> Result<()> {
        self.validate()?;
        if (self.alpha - self.beta - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "conservation needs alpha - beta = 1, got {} - {}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// Relevance at every layer output for one batch item.
#[derive(Debug, Clone)]
pub struct RelevanceState {
    pub item: usize,
    pub target: usize,
    pub output_relevance: f32,
    /// `layers[l]` is the relevance of layer `l`'s output (batch 1); `None` for layers
    /// past the logits (a trailing softmax).
    pub layers: Vec<Option<Tensor>>,
    pub input: Tensor,
}

/// Runs LRP for batch item `item` and returns every intermediate relevance tensor.
pub fn lrp_state(
    model: &Model,
    trace: &ForwardTrace,
    item: usize,
    target: usize,
    rules: &RuleConfig,
) -> Result<RelevanceState> {
    trace.check(model)?;
    rules.validate()?;
    if target >= model.class_count() {
        return Err(Error::invalid(format!(
            "target class {target} out of range for {} classes",
            model.class_count()
        )));
    }
    if item >= trace.batch() {
        return Err(Error::invalid(format!("batch item {item} out of range")));
    }
    let logits_layer = trace.logits_layer;
    let logit = trace.logits().item(item)[target];
    let mut rel: Vec<Option<Tensor>> = vec![None; model.len()];
    let mut start = Tensor::zeros(model.out_shape(logits_layer));
    start.data_mut()[target] = logit;
    rel[logits_layer] = Some(start);
    let mut input_rel = Tensor::zeros(model.input_shape());

    for idx in (0..=logits_layer).rev() {
        let Some(r) = rel[idx].clone() else { continue };
        let layer = model.layer(idx);
        let srcs = model.sources(idx);
        let x = trace.source(srcs[0]).item(item);
        let mut parts: Vec<Vec<f32>> = Vec::with_capacity(srcs.len());
        match layer.kind {
            LayerKind::Conv2d { .. } => {
                let op = LinearOp::conv(model, idx);
                parts.push(apply_rule(rules.rules.conv, &op, x, r.data(), rules));
            }
            LayerKind::Dense { .. } => {
                let op = LinearOp::dense(model, idx);
                parts.push(apply_rule(rules.rules.dense, &op, x, r.data(), rules));
            }
            LayerKind::AvgPool { .. } | LayerKind::GlobalAvgPool => {
                let op = LinearOp::pool(model, idx);
                parts.push(apply_rule(rules.rules.pool, &op, x, r.data(), rules));
            }
            LayerKind::Relu | LayerKind::Flatten => parts.push(r.data().to_vec()),
            LayerKind::MaxPool { .. } => {
                let arg = trace.argmax[idx].as_ref().expect("maxpool argmax in trace");
                let per = r.shape().item_len();
                let arg = &arg[item * per..(item + 1) * per];
                let mut out = vec![0.0f32; x.len()];
                for (o, &rv) in r.data().iter().enumerate() {
                    out[arg[o] as usize] += rv;
                }
                parts.push(out);
            }
            LayerKind::Concat => {
                let mut at = 0;
                for &s in srcs {
                    let n = model.source_shape(s).item_len();
                    parts.push(r.data()[at..at + n].to_vec());
                    at += n;
                }
            }
            LayerKind::Softmax => unreachable!("relevance starts below the softmax"),
        }
        for (&src, part) in srcs.iter().zip(parts) {
            if part.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteRelevance {
                    layer: layer.name.clone(),
                });
            }
            let dst = match src {
                Source::Input => &mut input_rel,
                Source::Layer(p) => rel[p].get_or_insert_with(|| Tensor::zeros(model.out_shape(p))),
            };
            for (d, v) in dst.data_mut().iter_mut().zip(&part) {
                *d += v;
            }
        }
    }

    Ok(RelevanceState {
        item,
        target,
        output_relevance: logit,
        layers: rel,
        input: input_rel,
    })
}

/// Input-resolution heatmap (channel sum of input relevance) for every batch item.
pub fn lrp(
    model: &Model,
    trace: &ForwardTrace,
    target: usize,
    rules: &RuleConfig,
) -> Result<Vec<Heatmap>> {
    (0..trace.batch())
        .map(|item| {
            let state = lrp_state(model, trace, item, target, rules)?;
            Ok(channel_collapse(&state.input).with_provenance(Provenance {
                method: "lrp".into(),
                model: model.meta.name.clone(),
                target_class: Some(target),
                ..Default::default()
            }))
        })
        .collect()
}

/// Patches per forward pass in [`explain_tile`].
const TILE_BATCH: usize = 16;

/// Runs LRP on every patch of `grid` and stitches the patch heatmaps to tile size.
pub fn explain_tile(
    model: &Model,
    tile: &RgbImage,
    grid: &PatchGrid,
    target: usize,
    rules: &RuleConfig,
) -> Result<(Vec<Heatmap>, TileHeatmap)> {
    let p = grid.patch;
    let input = model.input_shape();
    if (input.h, input.w) != (p, p) {
        return Err(Error::invalid(format!(
            "model takes {}×{} inputs, grid patch is {p}×{p}",
            input.h, input.w
        )));
    }
    if (tile.height() as usize, tile.width() as usize) != (grid.tile_height, grid.tile_width) {
        return Err(Error::invalid("tile size differs from the grid"));
    }
    let mut maps = Vec::with_capacity(grid.origins.len());
    for chunk in grid.origins.chunks(TILE_BATCH) {
        let patches = chunk
            .iter()
            .map(|&(x, y)| crop(tile, x as u32, y as u32, p as u32, p as u32))
            .collect::<Result<Vec<_>>>()?;
        let batch = batch_tensor(&patches.iter().collect::<Vec<_>>())?;
        let out = forward(model, &batch, true)?;
        let trace = out.trace.as_ref().expect("captured");
        for (map, &origin) in lrp(model, trace, target, rules)?.into_iter().zip(chunk) {
            let mut prov = map.provenance.clone();
            prov.origin = Some(origin);
            maps.push(map.with_provenance(prov));
        }
    }
    let stitched = stitch(&maps, grid)?;
    Ok((maps, stitched))
}

/// Sums relevance over channels: `heatmap(y, x) = Σ_c R(c, y, x)` (first batch item).
pub fn channel_collapse(relevance: &Tensor) -> Heatmap {
    let s = relevance.shape();
    let plane = s.h * s.w;
    let data = relevance.item(0);
    let mut values = vec![0.0f32; plane];
    for c in 0..s.c {
        for (v, r) in values.iter_mut().zip(&data[c * plane..(c + 1) * plane]) {
            *v += r;
        }
    }
    Heatmap::new(s.h, s.w, values).expect("plane size matches")
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerSum {
    pub layer: String,
    pub sum: f64,
    pub rel_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConservationReport {
    pub output: f64,
    /// Per layer output, in model order. Layers inside parallel branches hold only
    /// their branch's share.
    pub layers: Vec<LayerSum>,
    pub input_sum: f64,
    pub input_rel_deviation: f64,
}

impl ConservationReport {
    pub fn max_rel_deviation(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.rel_deviation)
            .fold(self.input_rel_deviation, f64::max)
    }
}

fn rel_dev(sum: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        sum.abs()
    } else {
        (sum - reference).abs() / reference.abs()
    }
}

/// Per-layer relevance sums and their deviation from the injected output relevance.
pub fn relevance_conservation(state: &RelevanceState, model: &Model) -> ConservationReport {
    let output = state.output_relevance as f64;
    let layers = state
        .layers
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            r.as_ref().map(|t| {
                let sum = t.sum();
                LayerSum {
                    layer: model.layer(i).name.clone(),
                    sum,
                    rel_deviation: rel_dev(sum, output),
                }
            })
        })
        .collect();
    let input_sum = state.input.sum();
    ConservationReport {
        output,
        layers,
        input_sum,
        input_rel_deviation: rel_dev(input_sum, output),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Part {
    All,
    Pos,
    Neg,
}

/// A layer that is linear in its input: `z = W x (+ b)`.
enum LinearOp<'a> {
    Conv {
        geom: ops::ConvGeom,
        out_channels: usize,
        weights: &'a [f32],
        pos: Vec<f32>,
        neg: Vec<f32>,
        bias: &'a [f32],
    },
    Dense {
        n_in: usize,
        n_out: usize,
        weights: &'a [f32],
        bias: &'a [f32],
    },
    /// Average pooling; `kernel == h == w` with stride 1 covers global pooling.
    Pool {
        input: Shape,
        output: Shape,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
    },
}

impl<'a> LinearOp<'a> {
    fn conv(model: &'a Model, idx: usize) -> Self {
        let (geom, out_channels) = conv_geom(model, idx).expect("conv layer");
        let l = model.layer(idx);
        LinearOp::Conv {
            geom,
            out_channels,
            weights: &l.weights,
            pos: l.weights.iter().map(|&w| w.max(0.0)).collect(),
            neg: l.weights.iter().map(|&w| w.min(0.0)).collect(),
            bias: &l.bias,
        }
    }

    fn dense(model: &'a Model, idx: usize) -> Self {
        let l = model.layer(idx);
        match l.kind {
            LayerKind::Dense {
                in_features,
                out_features,
            } => LinearOp::Dense {
                n_in: in_features,
                n_out: out_features,
                weights: &l.weights,
                bias: &l.bias,
            },
            _ => unreachable!(),
        }
    }

    fn pool(model: &'a Model, idx: usize) -> Self {
        let input = model.source_shape(model.sources(idx)[0]);
        let output = model.out_shape(idx);
        match model.layer(idx).kind {
            LayerKind::AvgPool { kernel, stride } => LinearOp::Pool {
                input,
                output,
                kernel_h: kernel,
                kernel_w: kernel,
                stride,
            },
            LayerKind::GlobalAvgPool => LinearOp::Pool {
                input,
                output,
                kernel_h: input.h,
                kernel_w: input.w,
                stride: 1,
            },
            _ => unreachable!(),
        }
    }

    fn out_len(&self) -> usize {
        match self {
            LinearOp::Conv { geom, out_channels, .. } => out_channels * geom.cols(),
            LinearOp::Dense { n_out, .. } => *n_out,
            LinearOp::Pool { output, .. } => output.item_len(),
        }
    }

    /// Bias part added to `z_j` (zero for pools).
    fn bias(&self, j: usize, part: Part) -> f32 {
        let b = match self {
            LinearOp::Conv { geom, bias, .. } => bias[j / geom.cols()],
            LinearOp::Dense { bias, .. } => bias[j],
            LinearOp::Pool { .. } => 0.0,
        };
        match part {
            Part::All => b,
            Part::Pos => b.max(0.0),
            Part::Neg => b.min(0.0),
        }
    }

    /// `out = W_part · x`
    fn apply(&self, x: &[f32], part: Part, out: &mut Vec<f32>) {
        out.clear();
        out.resize(self.out_len(), 0.0);
        match self {
            LinearOp::Conv {
                geom,
                out_channels,
                weights,
                pos,
                neg,
                ..
            } => {
                let w = match part {
                    Part::All => weights,
                    Part::Pos => pos.as_slice(),
                    Part::Neg => neg.as_slice(),
                };
                let mut col = Vec::new();
                ops::conv_forward(x, w, None, geom, *out_channels, &mut col, out);
            }
            LinearOp::Dense {
                n_in, weights, ..
            } => {
                for (j, o) in out.iter_mut().enumerate() {
                    let row = &weights[j * n_in..(j + 1) * n_in];
                    let mut s = 0.0f64;
                    for (w, v) in row.iter().zip(x) {
                        s += select(*w, part) as f64 * *v as f64;
                    }
                    *o = s as f32;
                }
            }
            LinearOp::Pool {
                input,
                output,
                kernel_h,
                kernel_w,
                stride,
            } => {
                if part == Part::Neg {
                    return;
                }
                let inv = 1.0 / (kernel_h * kernel_w) as f64;
                for c in 0..input.c {
                    for oy in 0..output.h {
                        for ox in 0..output.w {
                            let mut s = 0.0f64;
                            for ky in 0..*kernel_h {
                                let row = (c * input.h + oy * stride + ky) * input.w + ox * stride;
                                for v in &x[row..row + kernel_w] {
                                    s += *v as f64;
                                }
                            }
                            out[(c * output.h + oy) * output.w + ox] = (s * inv) as f32;
                        }
                    }
                }
            }
        }
    }

    /// `out += W_partᵀ · s`
    fn apply_t(&self, s: &[f32], part: Part, out: &mut [f32]) {
        match self {
            LinearOp::Conv {
                geom,
                out_channels,
                weights,
                pos,
                neg,
                ..
            } => {
                let w = match part {
                    Part::All => weights,
                    Part::Pos => pos.as_slice(),
                    Part::Neg => neg.as_slice(),
                };
                let mut col = Vec::new();
                ops::conv_transpose_add(s, w, geom, *out_channels, &mut col, out);
            }
            LinearOp::Dense {
                n_in, weights, ..
            } => {
                for (j, &sj) in s.iter().enumerate() {
                    if sj == 0.0 {
                        continue;
                    }
                    let row = &weights[j * n_in..(j + 1) * n_in];
                    for (o, w) in out.iter_mut().zip(row) {
                        *o += select(*w, part) * sj;
                    }
                }
            }
            LinearOp::Pool {
                input,
                output,
                kernel_h,
                kernel_w,
                stride,
            } => {
                if part == Part::Neg {
                    return;
                }
                let inv = 1.0 / (kernel_h * kernel_w) as f32;
                for c in 0..input.c {
                    for oy in 0..output.h {
                        for ox in 0..output.w {
                            let g = s[(c * output.h + oy) * output.w + ox] * inv;
                            for ky in 0..*kernel_h {
                                let row = (c * input.h + oy * stride + ky) * input.w + ox * stride;
                                for o in &mut out[row..row + kernel_w] {
                                    *o += g;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn select(w: f32, part: Part) -> f32 {
    match part {
        Part::All => w,
        Part::Pos => w.max(0.0),
        Part::Neg => w.min(0.0),
    }
}

fn apply_rule(rule: Rule, op: &LinearOp, x: &[f32], r: &[f32], cfg: &RuleConfig) -> Vec<f32> {
    match rule {
        Rule::Epsilon => epsilon_rule(op, x, r, cfg),
        Rule::AlphaBeta => alpha_beta_rule(op, x, r, cfg),
    }
}

fn epsilon_rule(op: &LinearOp, x: &[f32], r: &[f32], cfg: &RuleConfig) -> Vec<f32> {
    let include = cfg.bias_mode == BiasMode::IncludeInDenominator;
    let mut z = Vec::new();
    op.apply(x, Part::All, &mut z);
    let s: Vec<f32> = z
        .iter()
        .enumerate()
        .map(|(j, &zj)| {
            let zj = if include { zj + op.bias(j, Part::All) } else { zj };
            // sign(0) := +1
            let sign = if zj >= 0.0 { 1.0 } else { -1.0 };
            let denom = zj + cfg.epsilon * sign;
            if denom == 0.0 {
                0.0
            } else {
                r[j] / denom
            }
        })
        .collect();
    let mut c = vec![0.0f32; x.len()];
    op.apply_t(&s, Part::All, &mut c);
    c.iter().zip(x).map(|(ci, xi)| ci * xi).collect()
}

fn alpha_beta_rule(op: &LinearOp, x: &[f32], r: &[f32], cfg: &RuleConfig) -> Vec<f32> {
    let include = cfg.bias_mode == BiasMode::IncludeInDenominator;
    let xp: Vec<f32> = x.iter().map(|v| v.max(0.0)).collect();
    let has_neg = x.iter().any(|&v| v < 0.0);
    let xn: Vec<f32> = if has_neg {
        x.iter().map(|v| v.min(0.0)).collect()
    } else {
        Vec::new()
    };

    // z⁺_j = W⁺x⁺ + W⁻x⁻ (+ b⁺),  z⁻_j = W⁻x⁺ + W⁺x⁻ (+ b⁻)
    let sums = |first: Part, second: Part| -> Vec<f32> {
        let mut a = Vec::new();
        op.apply(&xp, first, &mut a);
        if has_neg {
            let mut b = Vec::new();
            op.apply(&xn, second, &mut b);
            for (ai, bi) in a.iter_mut().zip(&b) {
                *ai += bi;
            }
        }
        a
    };
    // R_i = x⁺_i (W_firstᵀ s)_i + x⁻_i (W_secondᵀ s)_i
    let redistribute = |s: &[f32], first: Part, second: Part, out: &mut [f32], scale: f32| {
        let mut cp = vec![0.0f32; x.len()];
        op.apply_t(s, first, &mut cp);
        for (o, (c, xi)) in out.iter_mut().zip(cp.iter().zip(&xp)) {
            *o += scale * c * xi;
        }
        if has_neg {
            let mut cn = vec![0.0f32; x.len()];
            op.apply_t(s, second, &mut cn);
            for (o, (c, xi)) in out.iter_mut().zip(cn.iter().zip(&xn)) {
                *o += scale * c * xi;
            }
        }
    };

    let mut out = vec![0.0f32; x.len()];
    if cfg.alpha != 0.0 {
        let zp = sums(Part::Pos, Part::Neg);
        let s: Vec<f32> = zp
            .iter()
            .enumerate()
            .map(|(j, &z)| {
                let z = if include { z + op.bias(j, Part::Pos) } else { z };
                r[j] / (z + AB_STABILIZER)
            })
            .collect();
        redistribute(&s, Part::Pos, Part::Neg, &mut out, cfg.alpha);
    }
    if cfg.beta != 0.0 {
        let zn = sums(Part::Neg, Part::Pos);
        let s: Vec<f32> = zn
            .iter()
            .enumerate()
            .map(|(j, &z)| {
                let z = if include { z + op.bias(j, Part::Neg) } else { z };
                r[j] / (z - AB_STABILIZER)
            })
            .collect();
        redistribute(&s, Part::Neg, Part::Pos, &mut out, -cfg.beta);
    }
    out
}

#[cfg(test)]
mod tests;

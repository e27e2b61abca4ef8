//! Central finite differences on the f64 reference pass versus the analytic backward.

use rand::seq::SliceRandom;
use rand::Rng;
use rlvs_core::nn::{backward, forward, Model};
use rlvs_core::{Shape, Tensor};

use super::reference::{ref_loss, RefParams};

pub const STEP: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct Check {
    pub kind: &'static str,
    pub what: String,
    pub analytic: f64,
    pub numeric: f64,
}

impl Check {
    /// `|a − n| / max(|a|, |n|)`, with both below `1e-6` counted as agreement.
    pub fn rel_err(&self) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs());
        if scale < 1e-6 {
            0.0
        } else {
            (self.analytic - self.numeric).abs() / scale
        }
    }
}

/// Which coordinate a check perturbs.
#[derive(Debug, Clone, Copy)]
pub enum Target {
    Weight(usize, usize),
    Bias(usize, usize),
    Input(usize),
}

fn numeric(model: &Model, params: &RefParams, input: &[f64], coeffs: &[f64], target: Target) -> Option<f64> {
    let eval = |delta: f64| {
        let mut p = RefParams { weights: params.weights.clone(), bias: params.bias.clone() };
        let mut x = input.to_vec();
        match target {
            Target::Weight(l, i) => p.weights[l][i] += delta,
            Target::Bias(l, i) => p.bias[l][i] += delta,
            Target::Input(i) => x[i] += delta,
        }
        ref_loss(model, &p, &x, coeffs)
    };
    let (_, base) = eval(0.0);
    let (lp, pp) = eval(STEP);
    let (lm, pm) = eval(-STEP);
    // reject samples whose perturbation flips a ReLU or a maxpool winner
    (pp == base && pm == base).then(|| (lp - lm) / (2.0 * STEP))
}

/// Samples up to `n` gradient coordinates matching `want` on one model/input pair.
pub fn check_model<R: Rng>(
    rng: &mut R,
    model: &Model,
    input: &Tensor,
    n: usize,
    want: &[Target],
) -> Vec<Check> {
    let classes = model.class_count();
    let coeffs: Vec<f64> = (0..classes).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let trace = forward(model, input, true).unwrap().trace.unwrap();
    let og = Tensor::from_vec(
        Shape::new(1, classes, 1, 1),
        coeffs.iter().map(|&c| c as f32).collect(),
    )
    .unwrap();
    // analytic gradients use the f32 coefficients; the oracle uses the same rounded values
    let coeffs: Vec<f64> = og.data().iter().map(|&v| v as f64).collect();
    let grads = backward(model, &trace, &og).unwrap();
    let params = RefParams::from_model(model);
    let x: Vec<f64> = input.data().iter().map(|&v| v as f64).collect();

    let mut pool = want.to_vec();
    pool.shuffle(rng);
    let mut out = Vec::new();
    for t in pool {
        if out.len() >= n {
            break;
        }
        let Some(num) = numeric(model, &params, &x, &coeffs, t) else { continue };
        let (kind, what, analytic) = match t {
            Target::Weight(l, i) => (
                model.layer(l).kind.tag(),
                format!("{}.w[{i}]", model.layer(l).name),
                grads.params[l].weights[i] as f64,
            ),
            Target::Bias(l, i) => (
                model.layer(l).kind.tag(),
                format!("{}.b[{i}]", model.layer(l).name),
                grads.params[l].bias[i] as f64,
            ),
            Target::Input(i) => ("input", format!("x[{i}]"), grads.input.data()[i] as f64),
        };
        out.push(Check { kind, what, analytic, numeric: num });
    }
    out
}

/// All parameter coordinates of layers whose kind tag equals `tag`.
pub fn param_targets(model: &Model, tag: &str) -> Vec<Target> {
    let mut v = Vec::new();
    for (l, layer) in model.layers().iter().enumerate() {
        if layer.kind.tag() == tag {
            v.extend((0..layer.weights.len()).map(|i| Target::Weight(l, i)));
            v.extend((0..layer.bias.len()).map(|i| Target::Bias(l, i)));
        }
    }
    v
}

pub fn input_targets(model: &Model) -> Vec<Target> {
    (0..model.input_shape().numel()).map(Target::Input).collect()
}

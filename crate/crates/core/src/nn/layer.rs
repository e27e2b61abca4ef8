use serde::{Deserialize, Serialize};

/// Name by which layers refer to the model input.
pub const INPUT: &str = "input";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Relu,
    #[serde(rename = "maxpool")]
    MaxPool { kernel: usize, stride: usize },
    #[serde(rename = "avgpool")]
    AvgPool { kernel: usize, stride: usize },
    #[serde(rename = "global_avgpool")]
    GlobalAvgPool,
    Concat,
    Flatten,
    Softmax,
}

impl LayerKind {
    pub fn tag(&self) -> &'static str {
        match self {
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::Dense { .. } => "dense",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool { .. } => "maxpool",
            LayerKind::AvgPool { .. } => "avgpool",
            LayerKind::GlobalAvgPool => "global_avgpool",
            LayerKind::Concat => "concat",
            LayerKind::Flatten => "flatten",
            LayerKind::Softmax => "softmax",
        }
    }

    /// `(weight count, bias count)` this kind carries.
    pub fn param_lens(&self) -> (usize, usize) {
        match *self {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => (out_channels * in_channels * kernel * kernel, out_channels),
            LayerKind::Dense {
                in_features,
                out_features,
            } => (out_features * in_features, out_features),
            _ => (0, 0),
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerKind::Conv2d { .. } | LayerKind::Dense { .. })
    }

    /// Fan-in used for weight initialization.
    pub fn fan_in(&self) -> usize {
        match *self {
            LayerKind::Conv2d {
                in_channels,
                kernel,
                ..
            } => in_channels * kernel * kernel,
            LayerKind::Dense { in_features, .. } => in_features,
            _ => 0,
        }
    }
}

/// One node of the model graph. Conv weights are `[out, in, k, k]`, dense weights `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
    pub inputs: Vec<String>,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Layer {
    pub fn new(name: impl Into<String>, kind: LayerKind, inputs: &[&str]) -> Self {
        let (nw, nb) = kind.param_lens();
        Layer {
            name: name.into(),
            kind,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            weights: vec![0.0; nw],
            bias: vec![0.0; nb],
        }
    }
}

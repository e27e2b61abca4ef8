//! The desk-scale reference network: a conv stem, an inception-style block with
//! parallel 1×1 and 3×3 branches, a second conv, and a pooled classification head.

use serde::{Deserialize, Serialize};

use super::layer::{LayerKind, INPUT};
use super::model::{Model, ModelBuilder};
use crate::error::Result;
use crate::tensor::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Global average pooling over the whole feature map.
    Global,
    /// Average pooling with the given kernel (and stride), flattened into the classifier.
    /// Keeps a coarse spatial layout the classifier can weight.
    Pooled(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub channels: usize,
    pub size: usize,
    pub classes: usize,
    pub stem: usize,
    pub branch: usize,
    pub top: usize,
    pub head: Head,
    /// Start the classifier layer at zero so class evidence only enters through training.
    #[serde(default)]
    pub zero_classifier: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            channels: 3,
            size: 64,
            classes: 2,
            stem: 16,
            branch: 16,
            top: 32,
            head: Head::Global,
            zero_classifier: false,
        }
    }
}

/// conv(5×5)/ReLU/maxpool2 → [conv1×1/ReLU ‖ conv3×3/ReLU] → concat → conv3×3/ReLU → head → dense.
pub fn reference_model(cfg: &ArchConfig, seed: u64) -> Result<Model> {
    let s = cfg.size;
    let mut b = ModelBuilder::new(
        "reference",
        Shape::new(1, cfg.channels, s, s),
        cfg.classes,
    )
    .config(serde_json::to_value(cfg).unwrap_or_default());
    b.conv("conv1", INPUT, cfg.channels, cfg.stem, 5, 1, 2)
        .relu("relu1", "conv1")
        .layer("pool1", LayerKind::MaxPool { kernel: 2, stride: 2 }, &["relu1"])
        .conv("branch1x1", "pool1", cfg.stem, cfg.branch, 1, 1, 0)
        .relu("branch1x1_relu", "branch1x1")
        .conv("branch3x3", "pool1", cfg.stem, cfg.branch, 3, 1, 1)
        .relu("branch3x3_relu", "branch3x3")
        .layer("mixed", LayerKind::Concat, &["branch1x1_relu", "branch3x3_relu"])
        .conv("conv3", "mixed", 2 * cfg.branch, cfg.top, 3, 1, 1)
        .relu("relu3", "conv3");
    let fmap = s / 2;
    match cfg.head {
        Head::Global => {
            b.layer("pool_head", LayerKind::GlobalAvgPool, &["relu3"])
                .dense("fc", "pool_head", cfg.top, cfg.classes);
        }
        Head::Pooled(k) => {
            let grid = if k == 0 || k > fmap { 0 } else { (fmap - k) / k + 1 };
            b.layer("pool_head", LayerKind::AvgPool { kernel: k, stride: k }, &["relu3"])
                .layer("flat", LayerKind::Flatten, &["pool_head"])
                .dense("fc", "flat", cfg.top * grid * grid, cfg.classes);
        }
    }
    let mut model = b.build(seed)?;
    if cfg.zero_classifier {
        if let Some((w, _)) = model.params_mut().filter(|(w, _)| !w.is_empty()).last() {
            w.fill(0.0);
        }
    }
    Ok(model)
}

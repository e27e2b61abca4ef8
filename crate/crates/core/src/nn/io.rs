//! Model files: a JSON manifest plus a sidecar blob of little-endian `f32` values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::layer::{Layer, LayerKind};
use super::model::{Model, ModelMeta};
use crate::error::{Error, Result};
use crate::tensor::{f32s_from_le, Shape};

pub const MODEL_MAGIC: &str = "RLVS-MODEL-1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobRange {
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerRecord {
    pub name: String,
    pub kind: String,
    pub inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_features: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_features: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<usize>,
    /// Byte ranges into the blob.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<BlobRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<BlobRange>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelManifest {
    pub magic: String,
    pub meta: ModelMeta,
    /// `[channels, height, width]`
    pub input_shape: [usize; 3],
    pub class_count: usize,
    pub blob: String,
    pub blob_len: usize,
    pub layers: Vec<LayerRecord>,
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

fn record_of(layer: &Layer, offset: &mut usize) -> LayerRecord {
    let mut rec = LayerRecord {
        name: layer.name.clone(),
        kind: layer.kind.tag().to_string(),
        inputs: layer.inputs.clone(),
        in_channels: None,
        out_channels: None,
        in_features: None,
        out_features: None,
        kernel: None,
        stride: None,
        padding: None,
        weights: None,
        bias: None,
    };
    match layer.kind {
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            rec.in_channels = Some(in_channels);
            rec.out_channels = Some(out_channels);
            rec.kernel = Some(kernel);
            rec.stride = Some(stride);
            rec.padding = Some(padding);
        }
        LayerKind::Dense {
            in_features,
            out_features,
        } => {
            rec.in_features = Some(in_features);
            rec.out_features = Some(out_features);
        }
        LayerKind::MaxPool { kernel, stride } | LayerKind::AvgPool { kernel, stride } => {
            rec.kernel = Some(kernel);
            rec.stride = Some(stride);
        }
        _ => {}
    }
    if layer.kind.has_params() {
        let wl = layer.weights.len() * 4;
        rec.weights = Some(BlobRange {
            offset: *offset,
            len: wl,
        });
        *offset += wl;
        let bl = layer.bias.len() * 4;
        rec.bias = Some(BlobRange {
            offset: *offset,
            len: bl,
        });
        *offset += bl;
    }
    rec
}

fn kind_of(rec: &LayerRecord) -> Result<LayerKind> {
    let need = |v: Option<usize>, field: &str| {
        v.ok_or_else(|| {
            Error::Corrupt(format!("layer `{}` is missing `{field}`", rec.name))
        })
    };
    Ok(match rec.kind.as_str() {
        "conv2d" => LayerKind::Conv2d {
            in_channels: need(rec.in_channels, "in_channels")?,
            out_channels: need(rec.out_channels, "out_channels")?,
            kernel: need(rec.kernel, "kernel")?,
            stride: need(rec.stride, "stride")?,
            padding: need(rec.padding, "padding")?,
        },
        "dense" => LayerKind::Dense {
            in_features: need(rec.in_features, "in_features")?,
            out_features: need(rec.out_features, "out_features")?,
        },
        "relu" => LayerKind::Relu,
        "maxpool" => LayerKind::MaxPool {
            kernel: need(rec.kernel, "kernel")?,
            stride: need(rec.stride, "stride")?,
        },
        "avgpool" => LayerKind::AvgPool {
            kernel: need(rec.kernel, "kernel")?,
            stride: need(rec.stride, "stride")?,
        },
        "global_avgpool" => LayerKind::GlobalAvgPool,
        "concat" => LayerKind::Concat,
        "flatten" => LayerKind::Flatten,
        "softmax" => LayerKind::Softmax,
        other => return Err(Error::UnsupportedLayer(other.to_string())),
    })
}

/// Builds the manifest and blob bytes without touching the filesystem.
pub fn encode_model(model: &Model, blob_name: &str) -> Result<(ModelManifest, Vec<u8>)> {
    if model.is_empty() {
        return Err(Error::InvalidModel("model has no layers".into()));
    }
    let mut offset = 0;
    let mut blob = Vec::with_capacity(model.param_count() * 4);
    let mut layers = Vec::with_capacity(model.len());
    for layer in model.layers() {
        layers.push(record_of(layer, &mut offset));
        for v in layer.weights.iter().chain(&layer.bias) {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let s = model.input_shape();
    let manifest = ModelManifest {
        magic: MODEL_MAGIC.to_string(),
        meta: model.meta.clone(),
        input_shape: [s.c, s.h, s.w],
        class_count: model.class_count(),
        blob: blob_name.to_string(),
        blob_len: blob.len(),
        layers,
    };
    Ok((manifest, blob))
}

pub fn decode_model(manifest: &ModelManifest, blob: &[u8]) -> Result<Model> {
    if manifest.magic != MODEL_MAGIC {
        return Err(Error::Corrupt(format!("bad model magic `{}`", manifest.magic)));
    }
    if manifest.blob_len != blob.len() {
        return Err(Error::Corrupt(format!(
            "manifest declares a {}-byte blob, file has {} bytes",
            manifest.blob_len,
            blob.len()
        )));
    }
    let slice = |r: Option<BlobRange>, expect: usize, name: &str| -> Result<Vec<f32>> {
        match r {
            None if expect == 0 => Ok(Vec::new()),
            None => Err(Error::Corrupt(format!("layer `{name}` lacks a parameter range"))),
            Some(r) => {
                if r.len != expect * 4 || r.offset % 4 != 0 || r.offset + r.len > blob.len() {
                    return Err(Error::Corrupt(format!(
                        "layer `{name}`: range {}+{} invalid for {expect} values in a {}-byte blob",
                        r.offset,
                        r.len,
                        blob.len()
                    )));
                }
                Ok(f32s_from_le(&blob[r.offset..r.offset + r.len]))
            }
        }
    };
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for rec in &manifest.layers {
        let kind = kind_of(rec)?;
        let (nw, nb) = kind.param_lens();
        layers.push(Layer {
            name: rec.name.clone(),
            kind,
            inputs: rec.inputs.clone(),
            weights: slice(rec.weights, nw, &rec.name)?,
            bias: slice(rec.bias, nb, &rec.name)?,
        });
    }
    let [c, h, w] = manifest.input_shape;
    Model::new(
        manifest.meta.clone(),
        Shape::new(1, c, h, w),
        manifest.class_count,
        layers,
    )
}

/// Writes `path` (JSON manifest) and `path.with_extension("bin")` (weights).
pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let blob_file = blob_path(path);
    let blob_name = blob_file
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::invalid(format!("bad model path {}", path.display())))?
        .to_string();
    let (manifest, blob) = encode_model(model, &blob_name)?;
    std::fs::write(&blob_file, blob)?;
    std::fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let manifest: ModelManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Corrupt(format!("model manifest: {e}")))?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let blob = std::fs::read(dir.join(&manifest.blob))?;
    decode_model(&manifest, &blob)
}

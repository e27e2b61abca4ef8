use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Layer, LayerKind, INPUT};
use crate::error::{Error, Result};
use crate::tensor::Shape;

/// Where a layer reads one of its inputs from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Input,
    Layer(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ModelMeta {
    pub name: String,
    pub seed: u64,
    #[serde(default)]
    pub config: serde_json::Value,
}

/// A validated layer DAG in topological order with a single output (the last layer).
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub meta: ModelMeta,
    input_shape: Shape,
    class_count: usize,
    layers: Vec<Layer>,
    sources: Vec<Vec<Source>>,
    out_shapes: Vec<Shape>,
    consumers: Vec<Vec<usize>>,
}

impl Model {
    /// Validates the graph and infers every layer's output shape.
    /// `input_shape.b` is ignored; models accept any batch size.
    pub fn new(
        meta: ModelMeta,
        input_shape: Shape,
        class_count: usize,
        layers: Vec<Layer>,
    ) -> Result<Model> {
        let input_shape = input_shape.with_batch(1);
        if layers.is_empty() {
            return Err(Error::InvalidModel("model has no layers".into()));
        }
        if class_count == 0 {
            return Err(Error::InvalidModel("class count must be positive".into()));
        }
        if input_shape.numel() == 0 {
            return Err(Error::InvalidModel("input shape has a zero dimension".into()));
        }
        let mut sources = Vec::with_capacity(layers.len());
        let mut out_shapes: Vec<Shape> = Vec::with_capacity(layers.len());
        let mut consumers = vec![Vec::new(); layers.len()];

        for (idx, layer) in layers.iter().enumerate() {
            if layer.name == INPUT {
                return Err(Error::InvalidModel(format!("layer name `{INPUT}` is reserved")));
            }
            if layers[..idx].iter().any(|l| l.name == layer.name) {
                return Err(Error::InvalidModel(format!(
                    "duplicate layer name `{}`",
                    layer.name
                )));
            }
            let mut srcs = Vec::with_capacity(layer.inputs.len());
            for input in &layer.inputs {
                let src = if input == INPUT {
                    Source::Input
                } else {
                    let pos = layers[..idx]
                        .iter()
                        .position(|l| &l.name == input)
                        .ok_or_else(|| {
                            Error::InvalidModel(format!(
                                "layer `{}` reads `{input}`, which is not an earlier layer",
                                layer.name
                            ))
                        })?;
                    consumers[pos].push(idx);
                    Source::Layer(pos)
                };
                srcs.push(src);
            }
            let in_shapes: Vec<Shape> = srcs
                .iter()
                .map(|s| match s {
                    Source::Input => input_shape,
                    Source::Layer(i) => out_shapes[*i],
                })
                .collect();
            let out = infer_shape(layer, &in_shapes)?;
            if matches!(layer.kind, LayerKind::Softmax)
                && (idx + 1 != layers.len() || srcs[0] == Source::Input)
            {
                return Err(Error::InvalidModel(format!(
                    "softmax layer `{}` must be the last layer and follow another layer",
                    layer.name
                )));
            }
            let (nw, nb) = layer.kind.param_lens();
            if layer.weights.len() != nw || layer.bias.len() != nb {
                return Err(Error::shape(
                    &layer.name,
                    format!(
                        "expected {nw} weights and {nb} biases, found {} and {}",
                        layer.weights.len(),
                        layer.bias.len()
                    ),
                ));
            }
            sources.push(srcs);
            out_shapes.push(out);
        }

        let last = layers.len() - 1;
        for (idx, c) in consumers.iter().enumerate() {
            if idx != last && c.is_empty() {
                return Err(Error::InvalidModel(format!(
                    "layer `{}` is a dangling output; the model must have a single output",
                    layers[idx].name
                )));
            }
        }
        let out = out_shapes[last];
        if out.c != class_count || out.h != 1 || out.w != 1 {
            return Err(Error::shape(
                &layers[last].name,
                format!("model output {out} is not ({class_count} classes, 1, 1)"),
            ));
        }

        Ok(Model {
            meta,
            input_shape,
            class_count,
            layers,
            sources,
            out_shapes,
            consumers,
        })
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, idx: usize) -> &Layer {
        &self.layers[idx]
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn sources(&self, idx: usize) -> &[Source] {
        &self.sources[idx]
    }

    pub fn consumers(&self, idx: usize) -> &[usize] {
        &self.consumers[idx]
    }

    /// Per-item output shape of layer `idx` (batch dimension 1).
    pub fn out_shape(&self, idx: usize) -> Shape {
        self.out_shapes[idx]
    }

    pub fn source_shape(&self, src: Source) -> Shape {
        match src {
            Source::Input => self.input_shape,
            Source::Layer(i) => self.out_shapes[i],
        }
    }

    /// Index of the layer whose output is the logits: the last layer, or its input
    /// when the model ends in a softmax.
    pub fn logits_layer(&self) -> usize {
        let last = self.layers.len() - 1;
        if matches!(self.layers[last].kind, LayerKind::Softmax) {
            match self.sources[last][0] {
                Source::Layer(i) => i,
                Source::Input => unreachable!("softmax on the raw input is rejected by Model::new"),
            }
        } else {
            last
        }
    }

    /// Last convolutional layer in topological order.
    pub fn last_conv(&self) -> Option<usize> {
        self.layers
            .iter()
            .rposition(|l| matches!(l.kind, LayerKind::Conv2d { .. }))
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Mutable access to parameters; shapes stay fixed so the graph remains valid.
    pub fn params_mut(&mut self) -> impl Iterator<Item = (&mut [f32], &mut [f32])> {
        self.layers
            .iter_mut()
            .map(|l| (l.weights.as_mut_slice(), l.bias.as_mut_slice()))
    }

    pub fn into_parts(self) -> (ModelMeta, Shape, usize, Vec<Layer>) {
        (self.meta, self.input_shape, self.class_count, self.layers)
    }
}

fn infer_shape(layer: &Layer, inputs: &[Shape]) -> Result<Shape> {
    let name = &layer.name;
    let single = || -> Result<Shape> {
        if inputs.len() != 1 {
            return Err(Error::shape(
                name,
                format!("expects exactly one input, got {}", inputs.len()),
            ));
        }
        Ok(inputs[0])
    };
    let window = |extent: usize, k: usize, s: usize, p: usize| -> Result<usize> {
        if k == 0 || s == 0 {
            return Err(Error::shape(name, "kernel and stride must be at least 1"));
        }
        if extent + 2 * p < k {
            return Err(Error::shape(
                name,
                format!("kernel {k} larger than padded extent {}", extent + 2 * p),
            ));
        }
        Ok((extent + 2 * p - k) / s + 1)
    };
    match layer.kind {
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            let x = single()?;
            if x.c != in_channels {
                return Err(Error::shape(
                    name,
                    format!("declares {in_channels} input channels, producer has {}", x.c),
                ));
            }
            if out_channels == 0 {
                return Err(Error::shape(name, "zero output channels"));
            }
            Ok(Shape::new(
                1,
                out_channels,
                window(x.h, kernel, stride, padding)?,
                window(x.w, kernel, stride, padding)?,
            ))
        }
        LayerKind::Dense {
            in_features,
            out_features,
        } => {
            let x = single()?;
            if x.item_len() != in_features {
                return Err(Error::shape(
                    name,
                    format!("declares {in_features} inputs, producer has {}", x.item_len()),
                ));
            }
            if out_features == 0 {
                return Err(Error::shape(name, "zero output features"));
            }
            Ok(Shape::new(1, out_features, 1, 1))
        }
        LayerKind::Relu | LayerKind::Softmax => single(),
        LayerKind::MaxPool { kernel, stride } | LayerKind::AvgPool { kernel, stride } => {
            let x = single()?;
            Ok(Shape::new(
                1,
                x.c,
                window(x.h, kernel, stride, 0)?,
                window(x.w, kernel, stride, 0)?,
            ))
        }
        LayerKind::GlobalAvgPool => {
            let x = single()?;
            Ok(Shape::new(1, x.c, 1, 1))
        }
        LayerKind::Flatten => {
            let x = single()?;
            Ok(Shape::new(1, x.item_len(), 1, 1))
        }
        LayerKind::Concat => {
            if inputs.len() < 2 {
                return Err(Error::shape(name, "concat needs at least two inputs"));
            }
            let (h, w) = (inputs[0].h, inputs[0].w);
            if inputs.iter().any(|s| s.h != h || s.w != w) {
                return Err(Error::shape(name, "concat inputs differ in spatial size"));
            }
            Ok(Shape::new(1, inputs.iter().map(|s| s.c).sum(), h, w))
        }
    }
}

/// Incremental graph construction with He-uniform initialization.
#[derive(Debug, Clone)]
pub struct ModelBuilder {
    meta: ModelMeta,
    input_shape: Shape,
    class_count: usize,
    layers: Vec<Layer>,
}

impl ModelBuilder {
    pub fn new(name: impl Into<String>, input_shape: Shape, class_count: usize) -> Self {
        ModelBuilder {
            meta: ModelMeta {
                name: name.into(),
                ..Default::default()
            },
            input_shape,
            class_count,
            layers: Vec::new(),
        }
    }

    pub fn config(mut self, config: serde_json::Value) -> Self {
        self.meta.config = config;
        self
    }

    pub fn layer(&mut self, name: &str, kind: LayerKind, inputs: &[&str]) -> &mut Self {
        self.layers.push(Layer::new(name, kind, inputs));
        self
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        &mut self,
        name: &str,
        input: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> &mut Self {
        self.layer(
            name,
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            },
            &[input],
        )
    }

    pub fn dense(&mut self, name: &str, input: &str, in_features: usize, out_features: usize) -> &mut Self {
        self.layer(
            name,
            LayerKind::Dense {
                in_features,
                out_features,
            },
            &[input],
        )
    }

    pub fn relu(&mut self, name: &str, input: &str) -> &mut Self {
        self.layer(name, LayerKind::Relu, &[input])
    }

    /// He-uniform weights, `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`, zero biases.
    pub fn build(self, seed: u64) -> Result<Model> {
        let ModelBuilder {
            mut meta,
            input_shape,
            class_count,
            mut layers,
        } = self;
        meta.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut layers {
            let fan_in = layer.kind.fan_in();
            if fan_in > 0 {
                let limit = (6.0 / fan_in as f64).sqrt() as f32;
                for w in &mut layer.weights {
                    *w = rng.gen_range(-limit..limit);
                }
            }
        }
        Model::new(meta, input_shape, class_count, layers)
    }
}

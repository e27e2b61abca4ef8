//! Dense rank-4 `f32` tensors in (batch, channel, height, width) order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"RLVS";

/// Shape of a tensor, `(batch, channels, height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub b: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(b: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { b, c, h, w }
    }

    pub fn numel(&self) -> usize {
        self.b * self.c * self.h * self.w
    }

    /// Number of values per batch item.
    pub fn item_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn with_batch(self, b: usize) -> Self {
        Shape { b, ..self }
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {}, {})", self.b, self.c, self.h, self.w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.numel()],
        }
    }

    pub fn filled(shape: Shape, value: f32) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::invalid(format!(
                "tensor data length {} does not match shape {shape}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn offset(&self, b: usize, c: usize, h: usize, w: usize) -> usize {
        ((b * self.shape.c + c) * self.shape.h + h) * self.shape.w + w
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, h: usize, w: usize) -> f32 {
        self.data[self.offset(b, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, h: usize, w: usize, v: f32) {
        let i = self.offset(b, c, h, w);
        self.data[i] = v;
    }

    pub fn item(&self, b: usize) -> &[f32] {
        let n = self.shape.item_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn item_mut(&mut self, b: usize) -> &mut [f32] {
        let n = self.shape.item_len();
        &mut self.data[b * n..(b + 1) * n]
    }

    /// Copies batch item `b` into a new tensor with batch size 1.
    pub fn select_item(&self, b: usize) -> Tensor {
        Tensor {
            shape: self.shape.with_batch(1),
            data: self.item(b).to_vec(),
        }
    }

    /// Stacks single-item tensors of identical shape along the batch axis.
    pub fn stack(items: &[&Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("cannot stack zero tensors"))?;
        let item_shape = first.shape.with_batch(1);
        let mut data = Vec::with_capacity(item_shape.numel() * items.len());
        for t in items {
            if t.shape.with_batch(1) != item_shape {
                return Err(Error::invalid(format!(
                    "cannot stack {} with {}",
                    t.shape, first.shape
                )));
            }
            data.extend_from_slice(&t.data);
        }
        let b: usize = items.iter().map(|t| t.shape.b).sum();
        Ok(Tensor {
            shape: item_shape.with_batch(b),
            data,
        })
    }

    /// Same data, different shape of equal element count.
    pub fn reshaped(mut self, shape: Shape) -> Result<Tensor> {
        if shape.numel() != self.data.len() {
            return Err(Error::invalid(format!(
                "cannot reshape {} into {shape}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, k: f32) -> Tensor {
        self.map(|v| v * k)
    }

    /// Sum of all values, accumulated in `f64` in storage order.
    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Writes the raw raster format: `RLVS`, then b, c, h, w as LE `u32`, then LE `f32` data.
    pub fn write_raw<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(TENSOR_MAGIC)?;
        for d in [self.shape.b, self.shape.c, self.shape.h, self.shape.w] {
            out.write_all(&dim_u32(d)?.to_le_bytes())?;
        }
        write_f32s(&mut out, &self.data)?;
        Ok(())
    }

    pub fn read_raw<R: Read>(mut input: R) -> Result<Tensor> {
        let mut header = [0u8; 20];
        input
            .read_exact(&mut header)
            .map_err(|_| Error::Corrupt("tensor header truncated".into()))?;
        if &header[..4] != TENSOR_MAGIC {
            return Err(Error::Corrupt("bad tensor magic".into()));
        }
        let dim = |i: usize| {
            u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize
        };
        let shape = Shape::new(dim(0), dim(1), dim(2), dim(3));
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        if bytes.len() != shape.numel() * 4 {
            return Err(Error::Corrupt(format!(
                "tensor {shape} needs {} data bytes, found {}",
                shape.numel() * 4,
                bytes.len()
            )));
        }
        Ok(Tensor {
            shape,
            data: f32s_from_le(&bytes),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::with_capacity(20 + self.data.len() * 4);
        self.write_raw(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Tensor> {
        let bytes = std::fs::read(path)?;
        Tensor::read_raw(bytes.as_slice())
    }
}

pub(crate) fn dim_u32(d: usize) -> Result<u32> {
    u32::try_from(d).map_err(|_| Error::invalid(format!("dimension {d} exceeds u32")))
}

pub(crate) fn write_f32s<W: Write>(out: &mut W, values: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub(crate) fn f32s_from_le(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec(Shape::new(1, 2, 2, 2), vec![0.0; 7]).is_err());
        assert!(Tensor::from_vec(Shape::new(1, 2, 2, 2), vec![0.0; 8]).is_ok());
    }

    #[test]
    fn offsets_are_row_major() {
        let t = Tensor::from_vec(Shape::new(2, 2, 2, 3), (0..24).map(|v| v as f32).collect())
            .unwrap();
        assert_eq!(t.get(0, 0, 0, 1), 1.0);
        assert_eq!(t.get(0, 0, 1, 0), 3.0);
        assert_eq!(t.get(0, 1, 0, 0), 6.0);
        assert_eq!(t.get(1, 0, 0, 0), 12.0);
    }

    #[test]
    fn raw_round_trip_is_byte_exact() {
        let t = Tensor::from_vec(
            Shape::new(1, 3, 2, 2),
            vec![0.1, -0.0, 3.5, f32::MIN_POSITIVE, 1e-30, 7.0, 8.0, 9.0, -1.0, 2.0, 3.0, 4.0],
        )
        .unwrap();
        let mut buf = Vec::new();
        t.write_raw(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"RLVS");
        assert_eq!(buf.len(), 20 + 12 * 4);
        let back = Tensor::read_raw(buf.as_slice()).unwrap();
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&t), bits(&back));
        let mut again = Vec::new();
        back.write_raw(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn truncated_raw_is_rejected() {
        let t = Tensor::zeros(Shape::new(1, 1, 2, 2));
        let mut buf = Vec::new();
        t.write_raw(&mut buf).unwrap();
        buf.pop();
        assert!(matches!(Tensor::read_raw(buf.as_slice()), Err(Error::Corrupt(_))));
    }
}

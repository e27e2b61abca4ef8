//! Conversions between 8-bit RGB images and network input tensors.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Pixel value `v` maps to `v / 255 − 0.5`.
#[inline]
pub fn to_unit(v: u8) -> f32 {
    v as f32 / 255.0 - 0.5
}

/// Writes one image as a `(3, h, w)` item into `out`.
pub fn write_item(img: &RgbImage, out: &mut [f32]) {
    let plane = (img.width() * img.height()) as usize;
    debug_assert_eq!(out.len(), 3 * plane);
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            out[c * plane + i] = to_unit(px.0[c]);
        }
    }
}

pub fn image_to_tensor(img: &RgbImage) -> Tensor {
    let mut t = Tensor::zeros(Shape::new(1, 3, img.height() as usize, img.width() as usize));
    write_item(img, t.data_mut());
    t
}

/// Stacks equally sized images into one batch.
pub fn batch_tensor(images: &[&RgbImage]) -> Result<Tensor> {
    let Some(first) = images.first() else {
        return Err(Error::invalid("empty image batch"));
    };
    let (w, h) = first.dimensions();
    let shape = Shape::new(images.len(), 3, h as usize, w as usize);
    let mut t = Tensor::zeros(shape);
    for (b, img) in images.iter().enumerate() {
        if img.dimensions() != (w, h) {
            return Err(Error::invalid(format!(
                "image {b} is {}×{}, batch is {w}×{h}",
                img.width(),
                img.height()
            )));
        }
        write_item(img, t.item_mut(b));
    }
    Ok(t)
}

/// Inverse of [`image_to_tensor`] for the first batch item, rounding and clamping.
pub fn tensor_to_image(t: &Tensor) -> Result<RgbImage> {
    let s = t.shape();
    if s.c != 3 {
        return Err(Error::invalid(format!("expected 3 channels, got {}", s.c)));
    }
    let plane = s.h * s.w;
    let d = t.item(0);
    Ok(RgbImage::from_fn(s.w as u32, s.h as u32, |x, y| {
        let i = y as usize * s.w + x as usize;
        let px = |c: usize| ((d[c * plane + i] + 0.5) * 255.0).round().clamp(0.0, 255.0) as u8;
        Rgb([px(0), px(1), px(2)])
    }))
}

pub fn crop(img: &RgbImage, x: u32, y: u32, width: u32, height: u32) -> Result<RgbImage> {
    if x + width > img.width() || y + height > img.height() {
        return Err(Error::invalid(format!(
            "crop {width}×{height} at ({x}, {y}) exceeds {}×{} image",
            img.width(),
            img.height()
        )));
    }
    Ok(image::imageops::crop_imm(img, x, y, width, height).to_image())
}

pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    Ok(image::open(path)?.to_rgb8())
}

pub fn save_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

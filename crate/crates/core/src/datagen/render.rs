//! Scene description and rasterization of histology-like images.

use image::{Rgb, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::evaluation::{point_in_polygon, AnnotationSet, CellClass, PointAnnotation, RegionAnnotation, RegionClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Tumor,
    Normal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub x: f32,
    pub y: f32,
    /// Nucleus radius before aspect and boundary wobble.
    pub radius: f32,
    pub aspect: f32,
    pub angle: f32,
    /// `(amplitude, frequency, phase)` terms of the nucleus outline.
    pub wobble: Vec<(f32, f32, f32)>,
    pub kind: CellKind,
    /// Annotated as excluded rather than with its class.
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub polygon: Vec<[f32; 2]>,
    pub class: RegionClass,
}

/// Per-case staining variation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stain {
    pub tint: [f32; 3],
    pub intensity: f32,
}

impl Default for Stain {
    fn default() -> Self {
        Stain {
            tint: [0.0; 3],
            intensity: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub background: [f32; 3],
    pub cytoplasm: [f32; 3],
    pub tumor_nucleus: [f32; 3],
    pub normal_nucleus: [f32; 3],
    pub necrosis: [f32; 3],
    /// Amplitude of the low-frequency background variation, in 8-bit levels.
    pub background_noise: f32,
    /// Per-pixel grain, in 8-bit levels.
    pub grain: f32,
    /// Spacing of the low-frequency noise lattice, in pixels.
    pub noise_scale: f32,
    /// Chromatin texture strength inside tumor nuclei.
    pub chromatin: f32,
    /// Cytoplasm ring radius relative to the nucleus.
    pub cytoplasm_scale: f32,
}

impl Default for Palette {
    fn default() -> Self {
        Palette {
            background: [234.0, 196.0, 216.0],
            cytoplasm: [214.0, 160.0, 200.0],
            tumor_nucleus: [72.0, 38.0, 118.0],
            normal_nucleus: [118.0, 82.0, 168.0],
            necrosis: [178.0, 112.0, 160.0],
            background_noise: 10.0,
            grain: 5.0,
            noise_scale: 8.0,
            chromatin: 0.25,
            cytoplasm_scale: 1.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Cell>,
    pub blobs: Vec<Blob>,
    pub stain: Stain,
}

impl Scene {
    pub fn annotations(&self, tile: &str) -> AnnotationSet {
        AnnotationSet {
            tile: tile.into(),
            points: self
                .cells
                .iter()
                .map(|c| PointAnnotation {
                    x: c.x,
                    y: c.y,
                    class: if c.excluded {
                        CellClass::Excluded
                    } else {
                        match c.kind {
                            CellKind::Tumor => CellClass::Cancer,
                            CellKind::Normal => CellClass::NonCancer,
                        }
                    },
                })
                .collect(),
            regions: self
                .blobs
                .iter()
                .map(|b| RegionAnnotation {
                    class: b.class,
                    polygon: b.polygon.clone(),
                })
                .collect(),
        }
    }

    pub fn has_tumor(&self) -> bool {
        self.cells.iter().any(|c| c.kind == CellKind::Tumor)
    }

    pub fn inside_blob(&self, x: f32, y: f32) -> bool {
        self.blobs.iter().any(|b| point_in_polygon(&b.polygon, x, y))
    }
}

/// Smooth lattice noise in `[-1, 1]` with the given spacing.
pub struct ValueNoise {
    cols: usize,
    spacing: f32,
    lattice: Vec<f32>,
}

impl ValueNoise {
    pub fn new<R: Rng>(rng: &mut R, width: usize, height: usize, spacing: f32) -> ValueNoise {
        let spacing = spacing.max(1.0);
        let cols = (width as f32 / spacing).ceil() as usize + 2;
        let rows = (height as f32 / spacing).ceil() as usize + 2;
        ValueNoise {
            cols,
            spacing,
            lattice: (0..cols * rows).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    pub fn at(&self, x: f32, y: f32) -> f32 {
        let (gx, gy) = (x / self.spacing, y / self.spacing);
        let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
        let smooth = |t: f32| t * t * (3.0 - 2.0 * t);
        let (fx, fy) = (smooth(gx - ix as f32), smooth(gy - iy as f32));
        let l = |cx: usize, cy: usize| self.lattice[cy * self.cols + cx];
        let top = l(ix, iy) * (1.0 - fx) + l(ix + 1, iy) * fx;
        let bottom = l(ix, iy + 1) * (1.0 - fx) + l(ix + 1, iy + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

fn blend(px: &mut [f32; 3], color: [f32; 3], a: f32) {
    for k in 0..3 {
        px[k] += (color[k] - px[k]) * a;
    }
}

/// Signed distance (in pixels, negative inside) from the scaled outline of `cell`.
fn outline_distance(cell: &Cell, scale: f32, x: f32, y: f32) -> f32 {
    let (dx, dy) = (x - cell.x, y - cell.y);
    let (s, c) = cell.angle.sin_cos();
    let u = dx * c + dy * s;
    let v = -dx * s + dy * c;
    let r = cell.radius * scale;
    let (ru, rv) = (r * cell.aspect, r / cell.aspect);
    let rho = ((u / ru).powi(2) + (v / rv).powi(2)).sqrt();
    let theta = v.atan2(u);
    let edge = 1.0 + cell.wobble.iter().map(|&(a, k, p)| a * (k * theta + p).sin()).sum::<f32>();
    (rho - edge) * r
}

fn cell_bounds(cell: &Cell, scale: f32, width: usize, height: usize) -> (usize, usize, usize, usize) {
    let wob: f32 = cell.wobble.iter().map(|w| w.0.abs()).sum();
    let reach = cell.radius * scale * cell.aspect.max(1.0 / cell.aspect) * (1.0 + wob) + 1.5;
    let lo = |c: f32| (c - reach).floor().max(0.0) as usize;
    let hi = |c: f32, n: usize| ((c + reach).ceil().max(0.0) as usize).min(n - 1);
    (lo(cell.x), hi(cell.x, width), lo(cell.y), hi(cell.y, height))
}

/// Rasterizes the scene. All randomness (textures) comes from `rng`.
pub fn render<R: Rng>(scene: &Scene, palette: &Palette, rng: &mut R) -> RgbImage {
    let (w, h) = (scene.width, scene.height);
    let stain = scene.stain;
    let stained = |c: [f32; 3]| -> [f32; 3] {
        // intensity scales the distance from white
        let mut o = [0.0; 3];
        for k in 0..3 {
            o[k] = 255.0 - (255.0 - c[k]) * stain.intensity + stain.tint[k];
        }
        o
    };
    let low = ValueNoise::new(rng, w, h, palette.noise_scale);
    let bg = stained(palette.background);
    let mut canvas: Vec<[f32; 3]> = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f32, (i / w) as f32);
            let n = low.at(x, y) * palette.background_noise;
            [bg[0] + n, bg[1] + n * 1.2, bg[2] + n * 0.6]
        })
        .collect();

    for blob in &scene.blobs {
        let mottled = ValueNoise::new(rng, w, h, palette.noise_scale * 0.6);
        let base = stained(palette.necrosis);
        for (x, y) in crate::evaluation::polygon_pixels(&blob.polygon, w, h) {
            let n = mottled.at(x as f32, y as f32);
            let px = &mut canvas[y * w + x];
            let c = [base[0] + 22.0 * n, base[1] + 18.0 * n, base[2] + 14.0 * n];
            blend(px, c, 0.9);
        }
    }

    let cyto = stained(palette.cytoplasm);
    for cell in &scene.cells {
        let (x0, x1, y0, y1) = cell_bounds(cell, palette.cytoplasm_scale, w, h);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = outline_distance(cell, palette.cytoplasm_scale, x as f32, y as f32);
                let a = (0.5 - d).clamp(0.0, 1.0) * 0.7;
                if a > 0.0 {
                    blend(&mut canvas[y * w + x], cyto, a);
                }
            }
        }
    }
    for cell in &scene.cells {
        let (color, texture) = match cell.kind {
            CellKind::Tumor => (stained(palette.tumor_nucleus), palette.chromatin),
            CellKind::Normal => (stained(palette.normal_nucleus), palette.chromatin * 0.3),
        };
        let (x0, x1, y0, y1) = cell_bounds(cell, 1.0, w, h);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = outline_distance(cell, 1.0, x as f32, y as f32);
                let a = (0.5 - d).clamp(0.0, 1.0);
                if a > 0.0 {
                    let t = 1.0 + texture * rng.gen_range(-1.0f32..1.0);
                    let c = [color[0] * t, color[1] * t, color[2] * t];
                    blend(&mut canvas[y * w + x], c, a);
                }
            }
        }
    }

    let mut img = RgbImage::new(w as u32, h as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        let c = canvas[i];
        let mut o = [0u8; 3];
        for k in 0..3 {
            let g = if palette.grain > 0.0 {
                rng.gen_range(-palette.grain..=palette.grain)
            } else {
                0.0
            };
            o[k] = (c[k] + g).round().clamp(0.0, 255.0) as u8;
        }
        *px = Rgb(o);
    }
    img
}

/// Star-shaped polygon around `(cx, cy)` with `k` vertices, clamped into the tile.
pub fn random_blob<R: Rng>(rng: &mut R, cx: f32, cy: f32, radius: f32, k: usize, width: usize, height: usize) -> Vec<[f32; 2]> {
    let phase = rng.gen_range(0.0..std::f32::consts::TAU);
    (0..k)
        .map(|i| {
            let t = phase + i as f32 * std::f32::consts::TAU / k as f32;
            let r = radius * rng.gen_range(0.7..1.0);
            [
                (cx + r * t.cos()).clamp(0.0, (width - 1) as f32),
                (cy + r * t.sin()).clamp(0.0, (height - 1) as f32),
            ]
        })
        .collect()
}

//! Patch grids over large tiles, stitching patch heatmaps back together,
//! normalization policies and overlay rendering.

mod raster;

pub use raster::{sidecar_path, Heatmap, Normalization, Provenance, HEATMAP_MAGIC};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PATCH: usize = 200;
pub const DEFAULT_ALPHA: f32 = 0.6;
/// Overlap used for visualization (one tenth); analysis uses 0.
pub const VISUAL_OVERLAP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub tile_height: usize,
    pub tile_width: usize,
    pub patch: usize,
    pub stride: usize,
    /// `(x, y)` origins in row-major order.
    pub origins: Vec<(usize, usize)>,
}

fn axis_origins(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut v = vec![0];
    loop {
        let last = *v.last().unwrap();
        if last + patch >= extent {
            break;
        }
        let next = last + stride;
        if next + patch >= extent {
            // clamp so the final patch ends exactly on the tile edge
            v.push(extent - patch);
            break;
        }
        v.push(next);
    }
    v
}

/// Covers a `height × width` tile with square patches overlapping by `overlap_fraction`.
pub fn plan_grid(
    (height, width): (usize, usize),
    patch: usize,
    overlap_fraction: f64,
) -> Result<PatchGrid> {
    if !(0.0..=0.95).contains(&overlap_fraction) {
        return Err(Error::invalid(format!(
            "overlap fraction {overlap_fraction} outside [0, 0.95]"
        )));
    }
    if patch == 0 || height < patch || width < patch {
        return Err(Error::invalid(format!(
            "tile {height}×{width} smaller than patch {patch}"
        )));
    }
    let stride = ((patch as f64 * (1.0 - overlap_fraction)).round() as usize).max(1);
    let ys = axis_origins(height, patch, stride);
    let xs = axis_origins(width, patch, stride);
    let origins = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect();
    Ok(PatchGrid {
        tile_height: height,
        tile_width: width,
        patch,
        stride,
        origins,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileHeatmap {
    pub map: Heatmap,
    pub coverage: Vec<u32>,
}

/// Places one heatmap per grid origin; overlapping pixels get the mean of their contributions.
pub fn stitch(patches: &[Heatmap], grid: &PatchGrid) -> Result<TileHeatmap> {
    if patches.len() != grid.origins.len() {
        return Err(Error::invalid(format!(
            "{} patch heatmaps for {} grid origins",
            patches.len(),
            grid.origins.len()
        )));
    }
    let (h, w, p) = (grid.tile_height, grid.tile_width, grid.patch);
    let mut sum = vec![0.0f64; h * w];
    let mut coverage = vec![0u32; h * w];
    for (map, &(ox, oy)) in patches.iter().zip(&grid.origins) {
        if map.dims() != (p, p) {
            return Err(Error::invalid(format!(
                "patch heatmap is {}×{}, grid patch is {p}×{p}",
                map.height, map.width
            )));
        }
        for y in 0..p {
            let row = &map.values[y * p..(y + 1) * p];
            let base = (oy + y) * w + ox;
            for (x, &v) in row.iter().enumerate() {
                sum[base + x] += v as f64;
                coverage[base + x] += 1;
            }
        }
    }
    let values = sum
        .iter()
        .zip(&coverage)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { (s / c as f64) as f32 })
        .collect();
    let mut map = Heatmap::new(h, w, values)?;
    if let Some(first) = patches.first() {
        map.normalization = first.normalization;
        map.provenance = Provenance {
            origin: None,
            ..first.provenance.clone()
        };
    }
    Ok(TileHeatmap { map, coverage })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormPolicy {
    Global,
    Local,
}

impl std::str::FromStr for NormPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(NormPolicy::Global),
            "local" => Ok(NormPolicy::Local),
            other => Err(Error::invalid(format!("unknown normalization policy `{other}`"))),
        }
    }
}

fn divide(map: &mut Heatmap, divisor: f32, policy: NormPolicy) {
    if divisor != 1.0 {
        for v in &mut map.values {
            *v /= divisor;
        }
    }
    // compose with any earlier normalization so the record holds the total divisor
    let prior = match map.normalization {
        Normalization::Raw => 1.0,
        Normalization::Local { divisor } => divisor,
        Normalization::Global { max_abs } => max_abs,
    };
    map.normalization = match policy {
        NormPolicy::Global => Normalization::Global {
            max_abs: prior * divisor,
        },
        NormPolicy::Local => Normalization::Local {
            divisor: prior * divisor,
        },
    };
}

/// Scales maps into `[-1, 1]`. `Global` divides every map by the largest absolute
/// value across the whole set; `Local` divides each map by its own. All-zero maps are
/// left unchanged with a divisor of 1. Returns the divisor applied to each map.
pub fn normalize(maps: &mut [Heatmap], policy: NormPolicy) -> Result<Vec<f32>> {
    if maps.is_empty() {
        return Err(Error::invalid("nothing to normalize"));
    }
    let divisors: Vec<f32> = match policy {
        NormPolicy::Global => {
            let m = maps.iter().map(Heatmap::max_abs).fold(0.0f32, f32::max);
            vec![if m > 0.0 { m } else { 1.0 }; maps.len()]
        }
        NormPolicy::Local => maps
            .iter()
            .map(|h| {
                let m = h.max_abs();
                if m > 0.0 {
                    m
                } else {
                    1.0
                }
            })
            .collect(),
    };
    for (map, &d) in maps.iter_mut().zip(&divisors) {
        divide(map, d, policy);
    }
    Ok(divisors)
}

/// Same as [`normalize`] on the maps inside tile heatmaps.
pub fn normalize_tiles(tiles: &mut [TileHeatmap], policy: NormPolicy) -> Result<Vec<f32>> {
    let mut maps: Vec<Heatmap> = tiles.iter().map(|t| t.map.clone()).collect();
    let d = normalize(&mut maps, policy)?;
    for (t, m) in tiles.iter_mut().zip(maps) {
        t.map = m;
    }
    Ok(d)
}

/// Blue–white–red colormap: −1 → (0, 0, 255), 0 → (255, 255, 255), +1 → (255, 0, 0),
/// linear in between. Values outside `[-1, 1]` are clamped.
pub fn colormap(v: f32) -> [f32; 3] {
    let v = v.clamp(-1.0, 1.0);
    if v >= 0.0 {
        let f = 255.0 * (1.0 - v);
        [255.0, f, f]
    } else {
        let f = 255.0 * (1.0 + v);
        [f, f, 255.0]
    }
}

/// ITU-R BT.601 luma of an 8-bit pixel.
pub fn luminance(p: [u8; 3]) -> f32 {
    0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32
}

/// Overlays a normalized map on the grayscale base image.
///
/// Each channel is `round((1 − a)·g + a·c)` with `g` the base luminance, `c` the
/// colormap color and `a = alpha·|v|`, so zero relevance leaves the gray base
/// untouched and `|v| = 1` at `alpha = 1` shows the saturated color.
pub fn render(map: &Heatmap, base: &RgbImage, alpha: f32) -> Result<RgbImage> {
    if (base.height() as usize, base.width() as usize) != map.dims() {
        return Err(Error::invalid(format!(
            "base image {}×{} does not match heatmap {}×{}",
            base.height(),
            base.width(),
            map.height,
            map.width
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    let mut out = RgbImage::new(base.width(), base.height());
    for (x, y, px) in out.enumerate_pixels_mut() {
        let g = luminance(base.get_pixel(x, y).0);
        let v = map.get(x as usize, y as usize).clamp(-1.0, 1.0);
        let a = alpha * v.abs();
        let c = colormap(v);
        for k in 0..3 {
            px.0[k] = ((1.0 - a) * g + a * c[k]).round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(out)
}

/// Colormap rendering on a white background.
pub fn render_plain(map: &Heatmap) -> RgbImage {
    let base = RgbImage::from_pixel(map.width as u32, map.height as u32, image::Rgb([255, 255, 255]));
    render(map, &base, 1.0).expect("dims match")
}

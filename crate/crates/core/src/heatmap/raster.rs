use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{dim_u32, f32s_from_le, write_f32s};

pub const HEATMAP_MAGIC: &[u8; 4] = b"RHMP";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Raw,
    /// Divided by its own maximum absolute value.
    Local { divisor: f32 },
    /// Divided by the maximum absolute value over a set of maps.
    Global { max_abs: f32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    #[serde(default)]
    pub method: String,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub target_class: Option<usize>,
    #[serde(default)]
    pub tile: Option<String>,
    /// `(x, y)` of the patch inside its tile.
    #[serde(default)]
    pub origin: Option<(usize, usize)>,
}

/// Single-channel signed raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
    pub normalization: Normalization,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HeatmapSidecar {
    height: usize,
    width: usize,
    normalization: Normalization,
    provenance: Provenance,
}

impl Heatmap {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Heatmap> {
        if values.len() != height * width {
            return Err(Error::invalid(format!(
                "{} values for a {height}×{width} heatmap",
                values.len()
            )));
        }
        Ok(Heatmap {
            height,
            width,
            values,
            normalization: Normalization::Raw,
            provenance: Provenance::default(),
        })
    }

    pub fn zeros(height: usize, width: usize) -> Heatmap {
        Heatmap::new(height, width, vec![0.0; height * width]).unwrap()
    }

    pub fn filled(height: usize, width: usize, v: f32) -> Heatmap {
        Heatmap::new(height, width, vec![v; height * width]).unwrap()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.values[y * self.width + x] = v;
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn max_abs(&self) -> f32 {
        self.values.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum()
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Heatmap {
        self.provenance = provenance;
        self
    }

    /// `RHMP`, height, width (LE `u32`), then LE `f32` values.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::with_capacity(12 + self.values.len() * 4);
        buf.extend_from_slice(HEATMAP_MAGIC);
        buf.extend_from_slice(&dim_u32(self.height)?.to_le_bytes());
        buf.extend_from_slice(&dim_u32(self.width)?.to_le_bytes());
        write_f32s(&mut buf, &self.values)?;
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Heatmap> {
        if bytes.len() < 12 || &bytes[..4] != HEATMAP_MAGIC {
            return Err(Error::Corrupt("bad heatmap header".into()));
        }
        let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if bytes.len() - 12 != h * w * 4 {
            return Err(Error::Corrupt(format!(
                "{h}×{w} heatmap needs {} data bytes, found {}",
                h * w * 4,
                bytes.len() - 12
            )));
        }
        Heatmap::new(h, w, f32s_from_le(&bytes[12..]))
    }

    /// Writes the raster to `path` and its manifest to `path` + `.json`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?)?;
        let side = HeatmapSidecar {
            height: self.height,
            width: self.width,
            normalization: self.normalization,
            provenance: self.provenance.clone(),
        };
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    /// Reads the raster; the manifest is optional (missing means raw, no provenance).
    pub fn load(path: impl AsRef<Path>) -> Result<Heatmap> {
        let path = path.as_ref();
        let mut map = Heatmap::from_bytes(&std::fs::read(path)?)?;
        let side = sidecar_path(path);
        if side.exists() {
            let s: HeatmapSidecar = serde_json::from_str(&std::fs::read_to_string(side)?)?;
            if (s.height, s.width) != (map.height, map.width) {
                return Err(Error::Corrupt("heatmap manifest dims differ from raster".into()));
            }
            map.normalization = s.normalization;
            map.provenance = s.provenance;
        }
        Ok(map)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

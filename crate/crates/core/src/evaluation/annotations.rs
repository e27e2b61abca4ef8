use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellClass {
    Cancer,
    NonCancer,
    /// Could not be identified; never scored.
    Excluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionClass {
    Necrosis,
    Vessel,
    Artifact,
}

impl RegionClass {
    pub const ALL: [RegionClass; 3] = [RegionClass::Necrosis, RegionClass::Vessel, RegionClass::Artifact];

    pub fn name(self) -> &'static str {
        match self {
            RegionClass::Necrosis => "necrosis",
            RegionClass::Vessel => "vessel",
            RegionClass::Artifact => "artifact",
        }
    }
}

impl std::str::FromStr for RegionClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        RegionClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown region class `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointAnnotation {
    pub x: f32,
    pub y: f32,
    pub class: CellClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionAnnotation {
    pub class: RegionClass,
    /// Vertices `[x, y]` in pixel coordinates; implicitly closed.
    pub polygon: Vec<[f32; 2]>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnnotationSet {
    #[serde(default)]
    pub tile: String,
    #[serde(default)]
    pub points: Vec<PointAnnotation>,
    #[serde(default)]
    pub regions: Vec<RegionAnnotation>,
}

impl AnnotationSet {
    pub fn load(path: impl AsRef<Path>) -> Result<AnnotationSet> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn count(&self, class: CellClass) -> usize {
        self.points.iter().filter(|p| p.class == class).count()
    }

    pub fn has_region(&self, class: RegionClass) -> bool {
        self.regions.iter().any(|r| r.class == class)
    }

    /// Coordinates inside a `width × height` tile and simple polygons.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let inside = |x: f32, y: f32| x >= 0.0 && y >= 0.0 && x <= (width - 1) as f32 && y <= (height - 1) as f32;
        for (i, p) in self.points.iter().enumerate() {
            if !inside(p.x, p.y) {
                return Err(Error::invalid(format!(
                    "point {i} at ({}, {}) outside {width}×{height} tile",
                    p.x, p.y
                )));
            }
        }
        for (i, r) in self.regions.iter().enumerate() {
            if r.polygon.len() < 3 {
                return Err(Error::invalid(format!("region {i} has fewer than 3 vertices")));
            }
            if r.polygon.iter().any(|v| !inside(v[0], v[1])) {
                return Err(Error::invalid(format!("region {i} extends outside the tile")));
            }
            if !is_simple(&r.polygon) {
                return Err(Error::invalid(format!("region {i} polygon intersects itself")));
            }
        }
        Ok(())
    }
}

fn orient(a: [f32; 2], b: [f32; 2], c: [f32; 2]) -> f64 {
    let (ax, ay) = (a[0] as f64, a[1] as f64);
    (b[0] as f64 - ax) * (c[1] as f64 - ay) - (b[1] as f64 - ay) * (c[0] as f64 - ax)
}

fn segments_cross(a: [f32; 2], b: [f32; 2], c: [f32; 2], d: [f32; 2]) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    let on = |p: [f32; 2], q: [f32; 2], r: [f32; 2], o: f64| {
        o == 0.0
            && r[0] >= p[0].min(q[0])
            && r[0] <= p[0].max(q[0])
            && r[1] >= p[1].min(q[1])
            && r[1] <= p[1].max(q[1])
    };
    on(a, b, c, o1) || on(a, b, d, o2) || on(c, d, a, o3) || on(c, d, b, o4)
}

/// No two non-adjacent edges touch.
pub fn is_simple(poly: &[[f32; 2]]) -> bool {
    let n = poly.len();
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Even-odd test of the point `(x, y)`.
pub fn point_in_polygon(poly: &[[f32; 2]], x: f32, y: f32) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = (poly[i][0], poly[i][1]);
        let (xj, yj) = (poly[j][0], poly[j][1]);
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Pixels whose centers lie inside the polygon, row-major.
pub fn polygon_pixels(poly: &[[f32; 2]], width: usize, height: usize) -> Vec<(usize, usize)> {
    let (mut x0, mut y0, mut x1, mut y1) = (f32::MAX, f32::MAX, f32::MIN, f32::MIN);
    for v in poly {
        x0 = x0.min(v[0]);
        y0 = y0.min(v[1]);
        x1 = x1.max(v[0]);
        y1 = y1.max(v[1]);
    }
    let clamp = |v: f32, hi: usize| (v.max(0.0) as usize).min(hi.saturating_sub(1));
    let mut out = Vec::new();
    if width == 0 || height == 0 || poly.len() < 3 {
        return out;
    }
    for y in clamp(y0.floor(), height)..=clamp(y1.ceil(), height) {
        for x in clamp(x0.floor(), width)..=clamp(x1.ceil(), width) {
            if point_in_polygon(poly, x as f32, y as f32) {
                out.push((x, y));
            }
        }
    }
    out
}

/// Pixels whose centers lie within `radius` of `(cx, cy)`, clipped to the tile.
pub fn disc_pixels(cx: f32, cy: f32, radius: f32, width: usize, height: usize) -> Vec<(usize, usize)> {
    let (cx, cy, r) = (cx as f64, cy as f64, radius as f64);
    let span = |c: f64, n: usize| -> (i64, i64) {
        ((c - r).ceil().max(0.0) as i64, (c + r).floor().min(n as f64 - 1.0) as i64)
    };
    let (y0, y1) = span(cy, height);
    let (x0, x1) = span(cx, width);
    let mut out = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            if dx * dx + dy * dy <= r * r {
                out.push((x as usize, y as usize));
            }
        }
    }
    out
}

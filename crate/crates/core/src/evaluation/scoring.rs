use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::annotations::{disc_pixels, polygon_pixels, AnnotationSet, CellClass, RegionClass};
use super::roc::roc;
use crate::error::{Error, Result};
use crate::heatmap::Heatmap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "class", rename_all = "snake_case")]
pub enum Scored {
    Cell(CellClass),
    Region(RegionClass),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub score: f64,
    pub target: Scored,
    /// Index into the point or region list it came from.
    pub index: usize,
}

impl CellScore {
    pub fn is_cancer(&self) -> bool {
        self.target == Scored::Cell(CellClass::Cancer)
    }
}

fn rectified_mean(map: &Heatmap, pixels: &[(usize, usize)]) -> f64 {
    let s: f64 = pixels.iter().map(|&(x, y)| map.get(x, y).max(0.0) as f64).sum();
    s / pixels.len() as f64
}

/// Mean rectified relevance in a disc around every scored point, then over the
/// interior of every region.
pub fn cell_scores(map: &Heatmap, ann: &AnnotationSet, radius: f32) -> Result<Vec<CellScore>> {
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("radius must be positive, got {radius}")));
    }
    let (h, w) = map.dims();
    let mut out = Vec::with_capacity(ann.points.len() + ann.regions.len());
    for (index, p) in ann.points.iter().enumerate() {
        if p.class == CellClass::Excluded {
            continue;
        }
        let px = disc_pixels(p.x, p.y, radius, w, h);
        if px.is_empty() {
            return Err(Error::EmptyDisc {
                x: p.x as f64,
                y: p.y as f64,
                radius: radius as f64,
            });
        }
        out.push(CellScore {
            score: rectified_mean(map, &px),
            target: Scored::Cell(p.class),
            index,
        });
    }
    for (index, r) in ann.regions.iter().enumerate() {
        out.push(CellScore {
            score: region_score(map, &r.polygon)?,
            target: Scored::Region(r.class),
            index,
        });
    }
    Ok(out)
}

/// Mean rectified value over the polygon interior.
pub fn region_score(map: &Heatmap, polygon: &[[f32; 2]]) -> Result<f64> {
    let (h, w) = map.dims();
    if polygon
        .iter()
        .any(|v| v[0] < 0.0 || v[1] < 0.0 || v[0] > (w - 1) as f32 || v[1] > (h - 1) as f32)
    {
        return Err(Error::invalid("region extends outside the tile"));
    }
    let px = polygon_pixels(polygon, w, h);
    if px.is_empty() {
        return Err(Error::invalid("region covers no pixel centers"));
    }
    Ok(rectified_mean(map, &px))
}

/// Cancer cells against non-cancer cells only.
pub fn cell_labels(scores: &[CellScore]) -> Vec<(f64, bool)> {
    scores
        .iter()
        .filter(|s| matches!(s.target, Scored::Cell(_)))
        .map(|s| (s.score, s.is_cancer()))
        .collect()
}

/// Cancer cells against non-cancer cells and every region.
pub fn cell_and_region_labels(scores: &[CellScore]) -> Vec<(f64, bool)> {
    scores.iter().map(|s| (s.score, s.is_cancer())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineAuc {
    pub mean: f64,
    pub std: f64,
    pub aucs: Vec<f64>,
}

/// AUC of uniformly random `[0, 1)` heatmaps, scored over the annotated cells.
pub fn random_baseline_auc(
    ann: &AnnotationSet,
    (height, width): (usize, usize),
    radius: f32,
    runs: usize,
    seed: u64,
) -> Result<BaselineAuc> {
    if runs < 2 {
        return Err(Error::invalid("random baseline needs at least 2 runs"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = Heatmap::zeros(height, width);
    let cells = AnnotationSet {
        regions: Vec::new(),
        ..ann.clone()
    };
    let mut aucs = Vec::with_capacity(runs);
    for _ in 0..runs {
        for v in &mut map.values {
            *v = rng.gen();
        }
        let scores = cell_scores(&map, &cells, radius)?;
        aucs.push(roc(&cell_labels(&scores))?.auc);
    }
    let mean = aucs.iter().sum::<f64>() / runs as f64;
    let var = aucs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
    Ok(BaselineAuc {
        mean,
        std: var.sqrt(),
        aucs,
    })
}

use serde::{Deserialize, Serialize};

use super::annotations::{AnnotationSet, RegionClass};
use super::scoring::region_score;
use crate::error::{Error, Result};
use crate::heatmap::Heatmap;

/// Centered `side`-long span inside `0..len`.
fn centered(len: usize, fraction: f64) -> (usize, usize) {
    let side = ((fraction * len as f64).round() as usize).clamp(1, len);
    let start = (len - side + 1) / 2;
    (start, start + side)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterMass {
    pub fractions: Vec<f64>,
    /// Share of absolute relevance inside the centered square, per fraction.
    pub profile: Vec<f64>,
    /// Maps that carried no relevance and were left out of the average.
    pub skipped: usize,
    /// Pixelwise mean of `|R|` over all maps.
    #[serde(skip)]
    pub mean_abs: Option<Heatmap>,
}

/// For each side fraction `f`, the share of `Σ|R|` inside the centered rectangle with
/// sides `round(f·h) × round(f·w)`, averaged over maps.
pub fn center_mass_profile(maps: &[Heatmap], fractions: &[f64]) -> Result<CenterMass> {
    let Some(first) = maps.first() else {
        return Err(Error::invalid("no heatmaps"));
    };
    let (h, w) = first.dims();
    if maps.iter().any(|m| m.dims() != (h, w)) {
        return Err(Error::invalid("heatmaps differ in size"));
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::invalid(format!("side fraction {f} outside (0, 1]")));
    }
    let mut profile = vec![0.0f64; fractions.len()];
    let mut mean = vec![0.0f64; h * w];
    let mut used = 0usize;
    for m in maps {
        for (acc, v) in mean.iter_mut().zip(&m.values) {
            *acc += v.abs() as f64;
        }
        let total: f64 = m.values.iter().map(|v| v.abs() as f64).sum();
        if total == 0.0 {
            continue;
        }
        used += 1;
        for (p, &f) in profile.iter_mut().zip(fractions) {
            let (y0, y1) = centered(h, f);
            let (x0, x1) = centered(w, f);
            let inner: f64 = (y0..y1)
                .map(|y| m.values[y * w + x0..y * w + x1].iter().map(|v| v.abs() as f64).sum::<f64>())
                .sum();
            *p += inner / total;
        }
    }
    if used > 0 {
        profile.iter_mut().for_each(|p| *p /= used as f64);
    }
    let n = maps.len() as f64;
    let mean_abs = Heatmap::new(h, w, mean.iter().map(|v| (v / n) as f32).collect())?;
    Ok(CenterMass {
        fractions: fractions.to_vec(),
        profile,
        skipped: maps.len() - used,
        mean_abs: Some(mean_abs),
    })
}

/// Pixelwise mean of the signed maps whose predicted class equals `class`.
pub fn class_average_heatmap(maps: &[Heatmap], predicted: &[usize], class: usize) -> Result<Heatmap> {
    if maps.len() != predicted.len() {
        return Err(Error::invalid("one predicted class per heatmap required"));
    }
    let chosen: Vec<&Heatmap> = maps.iter().zip(predicted).filter(|(_, &p)| p == class).map(|(m, _)| m).collect();
    let Some(first) = chosen.first() else {
        return Err(Error::invalid(format!("no heatmaps predicted as class {class}")));
    };
    let (h, w) = first.dims();
    let mut acc = vec![0.0f64; h * w];
    for m in &chosen {
        if m.dims() != (h, w) {
            return Err(Error::invalid("heatmaps differ in size"));
        }
        for (a, v) in acc.iter_mut().zip(&m.values) {
            *a += *v as f64;
        }
    }
    let n = chosen.len() as f64;
    Heatmap::new(h, w, acc.iter().map(|v| (v / n) as f32).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub tile: String,
    pub region: usize,
    pub class: RegionClass,
    pub area: usize,
    pub biased: f64,
    pub unbiased: f64,
}

/// Mean rectified relevance of every region (optionally of one class) under two models.
/// `biased[i]`, `unbiased[i]` and `annotations[i]` describe the same tile.
pub fn region_relevance_comparison(
    biased: &[Heatmap],
    unbiased: &[Heatmap],
    annotations: &[AnnotationSet],
    class: Option<RegionClass>,
) -> Result<Vec<RegionRow>> {
    if biased.len() != annotations.len() || unbiased.len() != annotations.len() {
        return Err(Error::invalid("need one heatmap per tile for both models"));
    }
    let mut rows = Vec::new();
    for ((b, u), ann) in biased.iter().zip(unbiased).zip(annotations) {
        if b.dims() != u.dims() {
            return Err(Error::invalid(format!("tile `{}`: heatmaps differ in size", ann.tile)));
        }
        for (i, r) in ann.regions.iter().enumerate() {
            if class.is_some_and(|c| c != r.class) {
                continue;
            }
            let area = super::annotations::polygon_pixels(&r.polygon, b.width, b.height).len();
            rows.push(RegionRow {
                tile: ann.tile.clone(),
                region: i,
                class: r.class,
                area,
                biased: region_score(b, &r.polygon)?,
                unbiased: region_score(u, &r.polygon)?,
            });
        }
    }
    Ok(rows)
}

pub fn region_rows_csv(rows: &[RegionRow]) -> String {
    let mut s = String::from("tile,region,class,area,biased,unbiased\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.tile,
            r.region,
            r.class.name(),
            r.area,
            r.biased,
            r.unbiased
        ));
    }
    s
}

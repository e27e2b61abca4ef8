use std::fmt::Write as _;
use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

impl RocCurve {
    /// Area under the stored points by the trapezoid rule.
    pub fn trapezoid_auc(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("fpr,tpr\n");
        for (f, t) in &self.points {
            writeln!(s, "{f},{t}").unwrap();
        }
        s
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Square plot: chance diagonal in gray, curve in red.
    pub fn plot(&self, size: u32) -> RgbImage {
        let mut img = RgbImage::from_pixel(size, size, Rgb([255, 255, 255]));
        let m = size / 16;
        let span = (size - 2 * m - 1) as f64;
        let at = |(f, t): (f64, f64)| ((m as f64 + f * span).round() as i64, (m as f64 + (1.0 - t) * span).round() as i64);
        let frame = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)];
        for w in frame.windows(2) {
            draw_line(&mut img, at(w[0]), at(w[1]), Rgb([0, 0, 0]));
        }
        draw_line(&mut img, at((0.0, 0.0)), at((1.0, 1.0)), Rgb([170, 170, 170]));
        for w in self.points.windows(2) {
            draw_line(&mut img, at(w[0]), at(w[1]), Rgb([200, 20, 20]));
        }
        img
    }

    pub fn save_plot(&self, path: impl AsRef<Path>) -> Result<()> {
        self.plot(256).save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }
}

fn draw_line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// ROC of `(score, is_positive)` pairs. Thresholds sweep the distinct scores from
/// high to low; the AUC is the Mann–Whitney statistic with midranks for ties.
pub fn roc(samples: &[(f64, bool)]) -> Result<RocCurve> {
    let positives = samples.iter().filter(|s| s.1).count();
    let negatives = samples.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass);
    }
    if samples.iter().any(|s| !s.0.is_finite()) {
        return Err(Error::invalid("non-finite score"));
    }
    let mut sorted: Vec<(f64, bool)> = samples.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (p, n) = (positives as f64, negatives as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    // ranks are assigned ascending, so walk the descending list from rank N downwards
    let total = sorted.len();
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < total {
        let mut j = i;
        let (mut tp_g, mut fp_g) = (0usize, 0usize);
        while j < total && sorted[j].0 == sorted[i].0 {
            if sorted[j].1 {
                tp_g += 1;
            } else {
                fp_g += 1;
            }
            j += 1;
        }
        // ascending ranks of this group are total-j+1 ..= total-i
        let midrank = ((total - j + 1) + (total - i)) as f64 / 2.0;
        rank_sum += midrank * tp_g as f64;
        tp += tp_g;
        fp += fp_g;
        points.push((fp as f64 / n, tp as f64 / p));
        i = j;
    }
    let auc = (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
    Ok(RocCurve {
        points,
        auc,
        positives,
        negatives,
    })
}

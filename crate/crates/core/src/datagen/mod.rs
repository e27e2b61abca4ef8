//! Deterministic synthetic histology-like patches and tiles with cell annotations,
//! plus the bias injectors used by the experiments.

mod render;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use render::{random_blob, render, Blob, Cell, CellKind, Palette, Scene, Stain, ValueNoise};

use crate::error::{Error, Result};
use crate::evaluation::{AnnotationSet, RegionClass};
use crate::rng::{hex_digest, substream};

pub const CANCER: usize = 1;
pub const NO_CANCER: usize = 0;
pub const DEFAULT_ARTIFACT_COLOR: [u8; 3] = [104, 66, 146];
pub const ARTIFACT_SIZE: u32 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub patch: usize,
    /// Tumor cells per 1000 px² in cancer patches and tumor nests.
    pub tumor_density: (f32, f32),
    /// Normal cells per 1000 px².
    pub normal_density: (f32, f32),
    /// Normal-cell density multiplier inside cancer patches and nests.
    pub normal_in_tumor: f32,
    pub tumor_radius: (f32, f32),
    pub normal_radius: (f32, f32),
    /// Outline wobble amplitude.
    pub tumor_irregularity: f32,
    pub normal_irregularity: f32,
    /// Largest aspect ratio of nucleus ellipses.
    pub tumor_elongation: f32,
    pub normal_elongation: f32,
    /// Probability that a patch contains a necrotic area.
    pub necrosis_prob: f32,
    /// Necrosis radius relative to the patch side.
    pub necrosis_radius: (f32, f32),
    /// Share of annotated cells marked as excluded on tiles.
    pub excluded_fraction: f32,
    pub case_size: usize,
    pub test_fraction: f32,
    /// Largest per-channel stain tint of a case, in 8-bit levels.
    pub stain_tint: f32,
    /// Largest relative deviation of a case's stain intensity.
    pub stain_intensity: f32,
    pub palette: Palette,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            patch: 64,
            tumor_density: (2.0, 4.5),
            normal_density: (2.5, 5.0),
            normal_in_tumor: 0.5,
            tumor_radius: (4.2, 5.6),
            normal_radius: (2.2, 3.2),
            tumor_irregularity: 0.12,
            normal_irregularity: 0.03,
            tumor_elongation: 1.35,
            normal_elongation: 1.1,
            necrosis_prob: 0.0,
            necrosis_radius: (0.2, 0.32),
            excluded_fraction: 0.0,
            case_size: 30,
            test_fraction: 0.2,
            stain_tint: 8.0,
            stain_intensity: 0.08,
            palette: Palette::default(),
        }
    }
}

impl SynthConfig {
    /// Default visuals rescaled to a different patch side.
    pub fn scaled(patch: usize) -> SynthConfig {
        let base = SynthConfig::default();
        let k = patch as f32 / base.patch as f32;
        let mut cfg = SynthConfig {
            patch,
            tumor_radius: (base.tumor_radius.0 * k, base.tumor_radius.1 * k),
            normal_radius: (base.normal_radius.0 * k, base.normal_radius.1 * k),
            // keep cells per patch constant
            tumor_density: (base.tumor_density.0 / (k * k), base.tumor_density.1 / (k * k)),
            normal_density: (base.normal_density.0 / (k * k), base.normal_density.1 / (k * k)),
            ..base
        };
        cfg.palette.noise_scale *= k;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let range = |name: &str, (lo, hi): (f32, f32)| -> Result<()> {
            if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::invalid(format!("{name} range ({lo}, {hi}) is not a valid non-negative range")));
            }
            Ok(())
        };
        range("tumor_density", self.tumor_density)?;
        range("normal_density", self.normal_density)?;
        range("tumor_radius", self.tumor_radius)?;
        range("normal_radius", self.normal_radius)?;
        range("necrosis_radius", self.necrosis_radius)?;
        if self.patch < 8 {
            return Err(Error::invalid(format!("patch side {} below 8", self.patch)));
        }
        if self.tumor_radius.0 <= self.normal_radius.1 {
            return Err(Error::invalid(format!(
                "tumor nucleus sizes {:?} must lie above normal sizes {:?}",
                self.tumor_radius, self.normal_radius
            )));
        }
        if self.normal_radius.0 <= 0.0 {
            return Err(Error::invalid("nucleus radius must be positive"));
        }
        if self.tumor_radius.1 * 2.0 >= self.patch as f32 {
            return Err(Error::invalid("tumor nuclei do not fit into a patch"));
        }
        if self.necrosis_radius.1 >= 0.5 {
            return Err(Error::invalid("necrosis does not fit into a patch"));
        }
        if !(0.0..=1.0).contains(&self.necrosis_prob) || !(0.0..1.0).contains(&self.excluded_fraction) {
            return Err(Error::invalid("probabilities must lie in [0, 1]"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) || self.case_size == 0 {
            return Err(Error::invalid("test fraction must lie in (0, 1) and cases must be non-empty"));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        hex_digest(&serde_json::to_vec(self).expect("config serializes"))
    }

    fn sample_count<R: Rng>(&self, rng: &mut R, (lo, hi): (f32, f32), area: f32) -> usize {
        let d = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        (d * area / 1000.0).round() as usize
    }

    fn new_cell<R: Rng>(&self, rng: &mut R, kind: CellKind, x: f32, y: f32) -> Cell {
        let (radius, irr, elong) = match kind {
            CellKind::Tumor => (self.tumor_radius, self.tumor_irregularity, self.tumor_elongation),
            CellKind::Normal => (self.normal_radius, self.normal_irregularity, self.normal_elongation),
        };
        let pick = |rng: &mut R, (lo, hi): (f32, f32)| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let wobble = (0..3)
            .map(|i| {
                (
                    if irr > 0.0 { rng.gen_range(0.0..irr) } else { 0.0 },
                    (2 + i) as f32,
                    rng.gen_range(0.0..std::f32::consts::TAU),
                )
            })
            .collect();
        Cell {
            x,
            y,
            radius: pick(rng, radius),
            aspect: pick(rng, (1.0, elong.max(1.0))),
            angle: rng.gen_range(0.0..std::f32::consts::PI),
            wobble,
            kind,
            excluded: false,
        }
    }

    fn stain<R: Rng>(&self, rng: &mut R) -> Stain {
        let t = self.stain_tint;
        let s = self.stain_intensity;
        let j = |rng: &mut R, a: f32| if a > 0.0 { rng.gen_range(-a..=a) } else { 0.0 };
        Stain {
            tint: [j(rng, t), j(rng, t), j(rng, t)],
            intensity: 1.0 + j(rng, s),
        }
    }
}

/// Places up to `count` cells of `kind` uniformly in the scene, avoiding heavy
/// overlap, necrosis, and (when given) the disc `keep_out`.
fn scatter<R: Rng>(
    cfg: &SynthConfig,
    scene: &mut Scene,
    rng: &mut R,
    kind: CellKind,
    count: usize,
    area: Option<(f32, f32, f32)>,
    keep_out: Option<(f32, f32, f32)>,
) -> usize {
    let mut placed = 0;
    for _ in 0..count {
        for _attempt in 0..30 {
            let (x, y) = match area {
                Some((cx, cy, r)) => {
                    let a = rng.gen_range(0.0..std::f32::consts::TAU);
                    let d = r * rng.gen::<f32>().sqrt();
                    (cx + d * a.cos(), cy + d * a.sin())
                }
                None => (
                    rng.gen_range(0.0..(scene.width - 1) as f32),
                    rng.gen_range(0.0..(scene.height - 1) as f32),
                ),
            };
            if x < 0.0 || y < 0.0 || x > (scene.width - 1) as f32 || y > (scene.height - 1) as f32 {
                continue;
            }
            let cell = cfg.new_cell(rng, kind, x, y);
            if let Some((kx, ky, kr)) = keep_out {
                if ((x - kx).powi(2) + (y - ky).powi(2)).sqrt() < kr + cell.radius {
                    continue;
                }
            }
            let crowded = scene.cells.iter().any(|o| {
                let d = ((o.x - x).powi(2) + (o.y - y).powi(2)).sqrt();
                d < 0.9 * (o.radius + cell.radius)
            });
            if crowded || scene.inside_blob(x, y) {
                continue;
            }
            scene.cells.push(cell);
            placed += 1;
            break;
        }
    }
    placed
}

/// Adds a necrotic area fully inside the scene that keeps `gap` pixels from earlier
/// ones. Returns false when no such spot was found.
fn add_necrosis<R: Rng>(scene: &mut Scene, rng: &mut R, radius: f32, gap: f32) -> bool {
    let margin = radius.ceil() + 1.0;
    let (w, h) = (scene.width as f32, scene.height as f32);
    if w - 1.0 - margin <= margin || h - 1.0 - margin <= margin {
        return false;
    }
    for _ in 0..20 {
        let cx = rng.gen_range(margin..w - 1.0 - margin);
        let cy = rng.gen_range(margin..h - 1.0 - margin);
        let clear = scene.blobs.iter().all(|b| {
            let (bx, by, br) = extent(&b.polygon);
            ((bx - cx).powi(2) + (by - cy).powi(2)).sqrt() > br + radius + gap
        });
        if clear {
            scene.blobs.push(Blob {
                polygon: random_blob(rng, cx, cy, radius, 12, scene.width, scene.height),
                class: RegionClass::Necrosis,
            });
            return true;
        }
    }
    false
}

/// Vertex centroid and largest vertex distance from it.
fn extent(poly: &[[f32; 2]]) -> (f32, f32, f32) {
    let n = poly.len() as f32;
    let cx = poly.iter().map(|v| v[0]).sum::<f32>() / n;
    let cy = poly.iter().map(|v| v[1]).sum::<f32>() / n;
    let r = poly
        .iter()
        .map(|v| ((v[0] - cx).powi(2) + (v[1] - cy).powi(2)).sqrt())
        .fold(0.0, f32::max);
    (cx, cy, r)
}

/// Scene for one training patch of the given label.
pub fn patch_scene<R: Rng>(cfg: &SynthConfig, label: usize, stain: Stain, rng: &mut R) -> Scene {
    let p = cfg.patch;
    let mut scene = Scene {
        width: p,
        height: p,
        cells: Vec::new(),
        blobs: Vec::new(),
        stain,
    };
    let area = (p * p) as f32;
    if rng.gen::<f32>() < cfg.necrosis_prob {
        let r = rng.gen_range(cfg.necrosis_radius.0..=cfg.necrosis_radius.1) * p as f32;
        add_necrosis(&mut scene, rng, r, 0.0);
    }
    if label == CANCER {
        // a cancer patch holds at least one tumor cell unless tumor cells are disabled
        let n = cfg.sample_count(rng, cfg.tumor_density, area).max((cfg.tumor_density.1 > 0.0) as usize);
        let placed = scatter(cfg, &mut scene, rng, CellKind::Tumor, n, None, None);
        if placed == 0 && n > 0 {
            scene.blobs.clear();
            scatter(cfg, &mut scene, rng, CellKind::Tumor, 1, None, None);
        }
        let (lo, hi) = cfg.normal_density;
        let n = cfg.sample_count(rng, (lo * cfg.normal_in_tumor, hi * cfg.normal_in_tumor), area);
        scatter(cfg, &mut scene, rng, CellKind::Normal, n, None, None);
    } else {
        let n = cfg.sample_count(rng, cfg.normal_density, area);
        scatter(cfg, &mut scene, rng, CellKind::Normal, n, None, None);
    }
    scene
}

/// Scene whose label is the type of the cell at the exact patch center. `distractors`
/// cells of random type are placed away from it.
pub fn center_scene<R: Rng>(cfg: &SynthConfig, label: usize, distractors: usize, stain: Stain, rng: &mut R) -> Scene {
    let p = cfg.patch;
    let c = (p as f32 - 1.0) / 2.0;
    let kind = if label == CANCER { CellKind::Tumor } else { CellKind::Normal };
    let center = cfg.new_cell(rng, kind, c, c);
    let keep = center.radius * cfg.palette.cytoplasm_scale + 1.0;
    let mut scene = Scene {
        width: p,
        height: p,
        cells: vec![center],
        blobs: Vec::new(),
        stain,
    };
    for _ in 0..distractors {
        let k = if rng.gen_bool(0.5) { CellKind::Tumor } else { CellKind::Normal };
        scatter(cfg, &mut scene, rng, k, 1, None, Some((c, c, keep)));
    }
    scene
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileConfig {
    pub width: usize,
    pub height: usize,
    /// Number of tumor nests.
    pub nests: (usize, usize),
    /// Nest radius relative to the shorter tile side.
    pub nest_radius: (f32, f32),
    pub necrosis: (usize, usize),
    /// Necrosis radius relative to the shorter tile side.
    pub necrosis_radius: (f32, f32),
}

impl Default for TileConfig {
    fn default() -> Self {
        TileConfig {
            width: 600,
            height: 600,
            nests: (1, 3),
            nest_radius: (0.12, 0.22),
            necrosis: (0, 0),
            necrosis_radius: (0.06, 0.1),
        }
    }
}

/// Large evaluation scene: tumor nests in normal tissue, optional necrosis.
pub fn tile_scene<R: Rng>(cfg: &SynthConfig, tile: &TileConfig, stain: Stain, rng: &mut R) -> Scene {
    let (w, h) = (tile.width, tile.height);
    let side = w.min(h) as f32;
    let mut scene = Scene {
        width: w,
        height: h,
        cells: Vec::new(),
        blobs: Vec::new(),
        stain,
    };
    let pick = |rng: &mut R, (lo, hi): (usize, usize)| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    let pickf = |rng: &mut R, (lo, hi): (f32, f32)| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    for _ in 0..pick(rng, tile.necrosis) {
        let r = pickf(rng, tile.necrosis_radius) * side;
        add_necrosis(&mut scene, rng, r, 2.0);
    }
    let nests: Vec<(f32, f32, f32)> = (0..pick(rng, tile.nests))
        .map(|_| {
            let r = pickf(rng, tile.nest_radius) * side;
            (rng.gen_range(0.0..w as f32), rng.gen_range(0.0..h as f32), r)
        })
        .collect();
    for &(cx, cy, r) in &nests {
        let area = std::f32::consts::PI * r * r;
        let n = cfg.sample_count(rng, cfg.tumor_density, area);
        scatter(cfg, &mut scene, rng, CellKind::Tumor, n, Some((cx, cy, r)), None);
    }
    let total = (w * h) as f32;
    let nest_area: f32 = nests.iter().map(|n| std::f32::consts::PI * n.2 * n.2).sum::<f32>().min(total);
    let (lo, hi) = cfg.normal_density;
    let k = cfg.normal_in_tumor;
    let n = cfg.sample_count(rng, (lo, hi), total - nest_area) + cfg.sample_count(rng, (lo * k, hi * k), nest_area);
    scatter(cfg, &mut scene, rng, CellKind::Normal, n, None, None);
    for cell in &mut scene.cells {
        cell.excluded = rng.gen::<f32>() < cfg.excluded_fraction;
    }
    scene
}

/// Sets the `size × size` top-left square to `color`.
pub fn inject_corner_artifact(img: &mut RgbImage, size: u32, color: [u8; 3]) -> Result<()> {
    if img.width() < size || img.height() < size {
        return Err(Error::invalid(format!(
            "{}×{} image is smaller than the {size}×{size} artifact",
            img.width(),
            img.height()
        )));
    }
    for y in 0..size {
        for x in 0..size {
            img.put_pixel(x, y, Rgb(color));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// One generated patch held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: RgbImage,
    pub label: usize,
    pub case: usize,
    pub split: Split,
    pub annotations: AnnotationSet,
}

impl Sample {
    pub fn has_region(&self, class: RegionClass) -> bool {
        self.annotations.has_region(class)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config_hash: String,
    pub seed: u64,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<&Sample> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for s in &self.samples {
            c[s.label] += 1;
        }
        c
    }
}

/// Assigns `n` patches to cases of about `case_size`, round-robin over a shuffled
/// order so each case mixes both classes, and puts `test_fraction` of the cases in
/// the test split.
fn case_layout(n: usize, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<Split>) {
    let cases = n.div_ceil(cfg.case_size).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut case_of = vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        case_of[i] = k % cases;
    }
    let mut case_order: Vec<usize> = (0..cases).collect();
    case_order.shuffle(rng);
    let n_test = if cases >= 2 {
        ((cases as f32 * cfg.test_fraction).round() as usize).clamp(1, cases - 1)
    } else {
        0
    };
    let mut split_of_case = vec![Split::Train; cases];
    for &c in &case_order[..n_test] {
        split_of_case[c] = Split::Test;
    }
    (case_of, split_of_case)
}

fn labels_for(n: usize, tumor_fraction: f32, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n_cancer = (n as f64 * tumor_fraction as f64).round() as usize;
    let mut labels: Vec<usize> = (0..n).map(|i| if i < n_cancer { CANCER } else { NO_CANCER }).collect();
    labels.shuffle(rng);
    labels
}

fn check_counts(n: usize, tumor_fraction: f32) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid("need at least 2 patches"));
    }
    if !(tumor_fraction > 0.0 && tumor_fraction < 1.0) {
        return Err(Error::invalid(format!("tumor fraction {tumor_fraction} outside (0, 1)")));
    }
    Ok(())
}

fn build<F>(cfg: &SynthConfig, n: usize, tumor_fraction: f32, seed: u64, mut scene_for: F) -> Result<Dataset>
where
    F: FnMut(usize, Stain, &mut ChaCha8Rng) -> Scene,
{
    cfg.validate()?;
    check_counts(n, tumor_fraction)?;
    let mut layout_rng = substream(seed, "layout", 0);
    let labels = labels_for(n, tumor_fraction, &mut layout_rng);
    let (case_of, split_of_case) = case_layout(n, cfg, &mut layout_rng);
    let stains: Vec<Stain> = (0..split_of_case.len())
        .map(|c| cfg.stain(&mut substream(seed, "stain", c as u64)))
        .collect();
    let samples = (0..n)
        .map(|i| {
            let mut rng = substream(seed, "patch", i as u64);
            let case = case_of[i];
            let scene = scene_for(labels[i], stains[case], &mut rng);
            let image = render(&scene, &cfg.palette, &mut rng);
            Sample {
                label: if scene.has_tumor() { CANCER } else { NO_CANCER },
                annotations: scene.annotations(&format!("patch-{i:05}")),
                image,
                case,
                split: split_of_case[case],
            }
        })
        .collect();
    Ok(Dataset {
        config_hash: cfg.hash(),
        seed,
        samples,
    })
}

/// In-memory dataset; labels follow the cells actually rendered.
pub fn generate(cfg: &SynthConfig, n: usize, tumor_fraction: f32, seed: u64) -> Result<Dataset> {
    build(cfg, n, tumor_fraction, seed, |label, stain, rng| patch_scene(cfg, label, stain, rng))
}

/// Center-rule dataset with 2 to 4 distractor cells per patch.
pub fn generate_center_bias(cfg: &SynthConfig, n: usize, seed: u64) -> Result<Dataset> {
    let mut d = build(cfg, n, 0.5, seed, |label, stain, rng| {
        let k = rng.gen_range(2..=4);
        center_scene(cfg, label, k, stain, rng)
    })?;
    // label by the central cell, not by the presence of any tumor cell
    for s in &mut d.samples {
        s.label = match s.annotations.points[0].class {
            crate::evaluation::CellClass::Cancer => CANCER,
            _ => NO_CANCER,
        };
    }
    Ok(d)
}

/// Evaluation tiles with their annotations.
pub fn generate_tiles(cfg: &SynthConfig, tile: &TileConfig, count: usize, seed: u64) -> Result<Vec<(RgbImage, AnnotationSet)>> {
    cfg.validate()?;
    if tile.width < cfg.patch || tile.height < cfg.patch {
        return Err(Error::invalid("tile smaller than a patch"));
    }
    Ok((0..count)
        .map(|i| {
            let mut rng = substream(seed, "tile", i as u64);
            let stain = cfg.stain(&mut rng);
            let scene = tile_scene(cfg, tile, stain, &mut rng);
            let img = render(&scene, &cfg.palette, &mut rng);
            (img, scene.annotations(&format!("tile-{i:03}")))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub label: usize,
    pub split: Split,
    pub case: usize,
    pub annotation: PathBuf,
    /// Region classes present in the patch.
    #[serde(default)]
    pub regions: Vec<RegionClass>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config_hash: String,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
    /// Patches per label index.
    pub class_counts: [usize; 2],
    #[serde(default)]
    pub excluded: BTreeMap<String, usize>,
}

impl DatasetManifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<DatasetManifest> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Loads every patch; relative paths resolve against `root`.
    pub fn load_samples(&self, root: impl AsRef<Path>) -> Result<Vec<Sample>> {
        let root = root.as_ref();
        self.entries
            .iter()
            .map(|e| {
                Ok(Sample {
                    image: crate::imaging::load_rgb(root.join(&e.image))?,
                    label: e.label,
                    case: e.case,
                    split: e.split,
                    annotations: AnnotationSet::load(root.join(&e.annotation))?,
                })
            })
            .collect()
    }
}

/// Writes PNGs, annotation files and `manifest.json` under `dir`.
pub fn write_dataset(data: &Dataset, dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("images"))?;
    std::fs::create_dir_all(dir.join("annotations"))?;
    let mut entries = Vec::with_capacity(data.samples.len());
    for (i, s) in data.samples.iter().enumerate() {
        let image = PathBuf::from(format!("images/{i:05}.png"));
        let annotation = PathBuf::from(format!("annotations/{i:05}.json"));
        crate::imaging::save_png(&s.image, dir.join(&image))?;
        s.annotations.save(dir.join(&annotation))?;
        let mut regions: Vec<RegionClass> = s.annotations.regions.iter().map(|r| r.class).collect();
        regions.sort();
        regions.dedup();
        entries.push(ManifestEntry {
            image,
            label: s.label,
            split: s.split,
            case: s.case,
            annotation,
            regions,
        });
    }
    let manifest = DatasetManifest {
        config_hash: data.config_hash.clone(),
        seed: data.seed,
        class_counts: data.class_counts(),
        entries,
        excluded: BTreeMap::new(),
    };
    manifest.save(dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Generates and writes a dataset.
pub fn gen_dataset(cfg: &SynthConfig, n: usize, tumor_fraction: f32, seed: u64, dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    write_dataset(&generate(cfg, n, tumor_fraction, seed)?, dir)
}

/// Drops every training patch containing `region_class`; the test split is kept.
/// Returns the filtered manifest and the number of dropped patches.
pub fn exclude_class(manifest: &DatasetManifest, region_class: &str) -> Result<(DatasetManifest, usize)> {
    let class: RegionClass = region_class.parse()?;
    let keep: Vec<ManifestEntry> = manifest
        .entries
        .iter()
        .filter(|e| e.split == Split::Test || !e.regions.contains(&class))
        .cloned()
        .collect();
    let dropped = manifest.entries.len() - keep.len();
    let mut class_counts = [0; 2];
    for e in &keep {
        class_counts[e.label] += 1;
    }
    let mut excluded = manifest.excluded.clone();
    *excluded.entry(class.name().to_string()).or_insert(0) += dropped;
    Ok((
        DatasetManifest {
            entries: keep,
            class_counts,
            excluded,
            ..manifest.clone()
        },
        dropped,
    ))
}

/// In-memory counterpart of [`exclude_class`].
pub fn exclude_samples(samples: &[Sample], class: RegionClass) -> (Vec<Sample>, usize) {
    let keep: Vec<Sample> = samples
        .iter()
        .filter(|s| s.split == Split::Test || !s.has_region(class))
        .cloned()
        .collect();
    let dropped = samples.len() - keep.len();
    (keep, dropped)
}

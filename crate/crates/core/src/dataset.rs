//! Dataset assembly: stratified train/val/test split, train-only
//! augmentation, and the on-disk layout
//!
//! ```text
//! out_dir/images/{train,val,test}/*.png
//! out_dir/labels/{train,val,test}/*.txt
//! out_dir/manifest.json
//! out_dir/classes.txt
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{synthesize_annotation, write_labels, Annotation, FaultClass};
use crate::config::PipelineConfig;
use crate::cwt::cwt_fft;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::render::{render_png, spectrogram_image, SpectrogramImage};
use crate::segment::{hop_length, segment_count, segment_signal};
use crate::signal::Signal;

pub const MANIFEST_FILE_NAME: &str = "manifest.json";
pub const CLASSES_FILE_NAME: &str = "classes.txt";
pub const MAX_ROTATION_DEG: f64 = 5.0;
pub const CONTRAST_RANGE: (f64, f64) = (0.8, 1.2);
pub const DEFAULT_MIN_BOX_AREA_FRACTION: f64 = 0.1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no items to split")]
    Empty,
    #[error("invalid split ratios: {0}")]
    Ratios(String),
    #[error("rotation angle {0}° outside [-5, 5]")]
    Angle(f64),
    #[error("contrast factor {0} outside [0.8, 1.2]")]
    Contrast(f64),
    #[error("invalid augmentation settings: {0}")]
    Augment(String),
    #[error("signal {0:?} carries no fault label")]
    Unlabeled(String),
    #[error("duplicate item name {0:?}")]
    DuplicateName(String),
    #[error("while processing {item}: {source}")]
    Stage {
        item: String,
        #[source]
        source: Box<Error>,
    },
    #[error("bad manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let r = self.as_array();
        if r.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(DatasetError::Ratios(format!("{r:?} has a negative or non-finite entry")));
        }
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::Ratios(format!("{r:?} sums to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `n` items; remainder ties go to the
/// earlier split.
pub fn apportion(n: usize, ratios: &SplitRatios) -> [usize; 3] {
    let quotas = ratios.as_array().map(|r| r * n as f64);
    let mut counts = quotas.map(|q| q.floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Per-class split counts whose row sums are the class sizes and whose column
/// sums are the global apportionment.
fn stratified_counts(group_sizes: &[usize], ratios: &SplitRatios) -> Vec<[usize; 3]> {
    let total: usize = group_sizes.iter().sum();
    let targets = apportion(total, ratios);
    let r = ratios.as_array();
    let mut cells: Vec<[usize; 3]> = group_sizes
        .iter()
        .map(|&n| r.map(|ri| (ri * n as f64).floor() as usize))
        .collect();
    let mut row_deficit: Vec<usize> = group_sizes
        .iter()
        .zip(&cells)
        .map(|(&n, c)| n - c.iter().sum::<usize>())
        .collect();
    let mut col_deficit = [0usize; 3];
    for s in 0..3 {
        let have: usize = cells.iter().map(|c| c[s]).sum();
        col_deficit[s] = targets[s].saturating_sub(have);
    }
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (g, &n) in group_sizes.iter().enumerate() {
        for (s, ri) in r.iter().enumerate() {
            let q = ri * n as f64;
            candidates.push((q - q.floor(), g, s));
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for &(_, g, s) in &candidates {
        if row_deficit[g] > 0 && col_deficit[s] > 0 {
            cells[g][s] += 1;
            row_deficit[g] -= 1;
            col_deficit[s] -= 1;
        }
    }
    // Row and column deficits have equal totals, so a feasible cell always exists.
    for g in 0..cells.len() {
        for s in 0..3 {
            let k = row_deficit[g].min(col_deficit[s]);
            cells[g][s] += k;
            row_deficit[g] -= k;
            col_deficit[s] -= k;
        }
    }
    cells
}

/// Something to place in a split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetItem {
    /// File stem shared by the image and its label file.
    pub name: String,
    pub class: Option<FaultClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    /// Relative to the dataset root.
    pub image: String,
    pub label: String,
    pub split: Split,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub class: Option<FaultClass>,
    #[serde(default)]
    pub augmentations: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub source: Option<String>,
}

impl ManifestEntry {
    fn new(name: String, split: Split, class: Option<FaultClass>) -> Self {
        Self {
            image: format!("images/{split}/{name}.png"),
            label: format!("labels/{split}/{name}.txt"),
            name,
            split,
            class,
            augmentations: Vec::new(),
            source: None,
        }
    }

    pub fn is_augmented(&self) -> bool {
        !self.augmentations.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    fn tally<'a>(entries: impl IntoIterator<Item = &'a ManifestEntry>) -> Self {
        let mut c = Self::default();
        for e in entries {
            match e.split {
                Split::Train => c.train += 1,
                Split::Val => c.val += 1,
                Split::Test => c.test += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub class_names: Vec<String>,
    pub seed: u64,
    pub counts: SplitCounts,
}

impl DatasetManifest {
    fn from_entries(mut entries: Vec<ManifestEntry>, seed: u64) -> Self {
        entries.sort_by(|a, b| (a.split, &a.name).cmp(&(b.split, &b.name)));
        Self {
            counts: SplitCounts::tally(&entries),
            entries,
            class_names: FaultClass::names(),
            seed,
        }
    }

    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn load(dataset_dir: impl AsRef<Path>) -> Result<Self> {
        let path = dataset_dir.as_ref().join(MANIFEST_FILE_NAME);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            context: path.display().to_string(),
            source,
        })
    }
}

/// Shuffle by `seed` and assign splits, stratified by class.
///
/// Totals per split follow [`apportion`] exactly; each class is split as
/// close to the ratios as those totals allow.
pub fn split_dataset(
    items: &[DatasetItem],
    ratios: &SplitRatios,
    seed: u64,
) -> Result<DatasetManifest, DatasetError> {
    ratios.validate()?;
    if items.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut seen = HashSet::new();
    for it in items {
        if !seen.insert(it.name.as_str()) {
            return Err(DatasetError::DuplicateName(it.name.clone()));
        }
    }
    let mut groups: BTreeMap<Option<FaultClass>, Vec<&DatasetItem>> = BTreeMap::new();
    for it in items {
        groups.entry(it.class).or_default().push(it);
    }
    let sizes: Vec<usize> = groups.values().map(Vec::len).collect();
    let counts = stratified_counts(&sizes, ratios);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(items.len());
    for (mut members, quota) in groups.into_values().zip(counts) {
        members.shuffle(&mut rng);
        let mut it = members.into_iter();
        for (split, n) in Split::ALL.into_iter().zip(quota) {
            for item in it.by_ref().take(n) {
                entries.push(ManifestEntry::new(item.name.clone(), split, item.class));
            }
        }
    }
    Ok(DatasetManifest::from_entries(entries, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Extra augmented copies per training image; 0 disables augmentation.
    pub copies: usize,
    pub flip_probability: f64,
    /// Angles are drawn uniformly from `[-max, max]`.
    pub max_rotation_deg: f64,
    pub contrast_min: f64,
    pub contrast_max: f64,
    /// Rotated boxes keeping less than this fraction of their area are dropped.
    pub min_box_area_fraction: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            copies: 1,
            flip_probability: 0.5,
            max_rotation_deg: MAX_ROTATION_DEG,
            contrast_min: CONTRAST_RANGE.0,
            contrast_max: CONTRAST_RANGE.1,
            min_box_area_fraction: DEFAULT_MIN_BOX_AREA_FRACTION,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            copies: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::Augment(m));
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return bad(format!("flip_probability {} not in [0, 1]", self.flip_probability));
        }
        if !(0.0..=MAX_ROTATION_DEG).contains(&self.max_rotation_deg) {
            return bad(format!("max_rotation_deg {} not in [0, 5]", self.max_rotation_deg));
        }
        let (lo, hi) = CONTRAST_RANGE;
        if !(lo <= self.contrast_min && self.contrast_min <= self.contrast_max && self.contrast_max <= hi) {
            return bad(format!(
                "contrast range [{}, {}] not inside [0.8, 1.2]",
                self.contrast_min, self.contrast_max
            ));
        }
        if !(0.0..=1.0).contains(&self.min_box_area_fraction) {
            return bad(format!(
                "min_box_area_fraction {} not in [0, 1]",
                self.min_box_area_fraction
            ));
        }
        Ok(())
    }
}

/// Mirror about the vertical axis; boxes map `x → 1 − x`.
pub fn flip_horizontal(
    image: &SpectrogramImage,
    annotations: &[Annotation],
) -> (SpectrogramImage, Vec<Annotation>) {
    let mut pixels = image.pixels().clone();
    for r in 0..pixels.rows() {
        pixels.row_mut(r).reverse();
    }
    let boxes = annotations
        .iter()
        .map(|a| Annotation {
            x_center: 1.0 - a.x_center,
            ..*a
        })
        .collect();
    (image.with_pixels(pixels), boxes)
}

/// [`rotate_small_with`] using the default 10% residual-area rule.
pub fn rotate_small(
    image: &SpectrogramImage,
    annotations: &[Annotation],
    angle_deg: f64,
) -> Result<(SpectrogramImage, Vec<Annotation>), DatasetError> {
    rotate_small_with(image, annotations, angle_deg, DEFAULT_MIN_BOX_AREA_FRACTION)
}

/// Rotate about the image center with bilinear sampling and zero fill.
///
/// Each box becomes the axis-aligned hull of its rotated corners, clipped to
/// the image. Positive angles turn content clockwise on screen (y points down).
pub fn rotate_small_with(
    image: &SpectrogramImage,
    annotations: &[Annotation],
    angle_deg: f64,
    min_area_fraction: f64,
) -> Result<(SpectrogramImage, Vec<Annotation>), DatasetError> {
    if angle_deg.is_nan() || angle_deg.abs() > MAX_ROTATION_DEG {
        return Err(DatasetError::Angle(angle_deg));
    }
    if angle_deg == 0.0 {
        return Ok((image.clone(), annotations.to_vec()));
    }
    let (h, w) = (image.height(), image.width());
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let src = image.pixels();
    let at = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
            0.0
        } else {
            src.get(r as usize, c as usize)
        }
    };
    let mut out = Matrix::zeros(h, w);
    for i in 0..h {
        let v = i as f64 + 0.5 - cy;
        for j in 0..w {
            let u = j as f64 + 0.5 - cx;
            // Inverse rotation back into the source frame.
            let xs = cos * u + sin * v + cx - 0.5;
            let ys = -sin * u + cos * v + cy - 0.5;
            let (x0, y0) = (xs.floor(), ys.floor());
            let (fx, fy) = (xs - x0, ys - y0);
            let (c0, r0) = (x0 as isize, y0 as isize);
            let top = at(r0, c0) * (1.0 - fx) + at(r0, c0 + 1) * fx;
            let bottom = at(r0 + 1, c0) * (1.0 - fx) + at(r0 + 1, c0 + 1) * fx;
            out.set(i, j, (top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0));
        }
    }

    let rotate_point = |x: f64, y: f64| -> (f64, f64) {
        let (u, v) = (x * w as f64 - cx, y * h as f64 - cy);
        (
            (cos * u - sin * v + cx) / w as f64,
            (sin * u + cos * v + cy) / h as f64,
        )
    };
    let mut boxes = Vec::with_capacity(annotations.len());
    for a in annotations {
        let (x0, y0, x1, y1) = a.corners();
        let pts = [
            rotate_point(x0, y0),
            rotate_point(x1, y0),
            rotate_point(x0, y1),
            rotate_point(x1, y1),
        ];
        let min_x = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).max(0.0);
        let max_x = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).min(1.0);
        let min_y = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).max(0.0);
        let max_y = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).min(1.0);
        if max_x <= min_x || max_y <= min_y {
            continue;
        }
        if (max_x - min_x) * (max_y - min_y) < min_area_fraction * a.area() {
            continue;
        }
        if let Ok(b) = Annotation::from_corners(a.class, min_x, min_y, max_x, max_y) {
            boxes.push(b);
        }
    }
    Ok((image.with_pixels(out), boxes))
}

/// `p' = clamp(mean + factor · (p − mean), 0, 1)`.
pub fn contrast_jitter(
    image: &SpectrogramImage,
    factor: f64,
) -> Result<SpectrogramImage, DatasetError> {
    if !(CONTRAST_RANGE.0..=CONTRAST_RANGE.1).contains(&factor) {
        return Err(DatasetError::Contrast(factor));
    }
    let px = image.pixels();
    let constant = px.min_max().is_none_or(|(lo, hi)| lo == hi);
    if factor == 1.0 || constant {
        return Ok(image.clone());
    }
    let mean = px.as_slice().iter().sum::<f64>() / px.as_slice().len() as f64;
    Ok(image.with_pixels(px.map(|p| (mean + factor * (p - mean)).clamp(0.0, 1.0))))
}

/// A recording with a name that is unique within the dataset.
#[derive(Debug, Clone)]
pub struct LabeledSignal {
    pub id: String,
    pub signal: Signal,
}

fn segment_name(signal_id: &str, index: usize) -> String {
    format!("{signal_id}_s{index:04}")
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn stage_err(item: &str, e: impl Into<Error>) -> Error {
    DatasetError::Stage {
        item: item.to_string(),
        source: Box::new(e.into()),
    }
    .into()
}

/// Run segment → CWT → render → annotate for every signal, split, augment
/// the training split and write everything under `out_dir`.
///
/// Per-signal work runs on the current rayon pool. Output is identical for
/// any pool size.
pub fn build_dataset(
    signals: &[LabeledSignal],
    config: &PipelineConfig,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest> {
    config.validate()?;
    let out_dir = out_dir.as_ref();
    let hop = hop_length(config.window_len, config.overlap)?;

    let mut items = Vec::new();
    for ls in signals {
        let label = ls
            .signal
            .source_label()
            .ok_or_else(|| DatasetError::Unlabeled(ls.id.clone()))?;
        let n = segment_count(ls.signal.len(), config.window_len, hop);
        if n == 0 {
            return Err(stage_err(
                &ls.id,
                crate::segment::SegmentError::TooShort {
                    len: ls.signal.len(),
                    window_len: config.window_len,
                },
            ));
        }
        items.extend((0..n).map(|i| DatasetItem {
            name: segment_name(&ls.id, i),
            class: Some(label),
        }));
    }
    items.sort_by(|a, b| a.name.cmp(&b.name));
    let split = split_dataset(&items, &config.split, config.seed)?;
    let assignment: HashMap<&str, Split> = split
        .entries
        .iter()
        .map(|e| (e.name.as_str(), e.split))
        .collect();
    let stream_of: HashMap<&str, u64> = items
        .iter()
        .enumerate()
        .map(|(i, it)| (it.name.as_str(), i as u64))
        .collect();

    for split in Split::ALL {
        create_dir(&out_dir.join("images").join(split.as_str()))?;
        create_dir(&out_dir.join("labels").join(split.as_str()))?;
    }

    let per_signal: Vec<Vec<ManifestEntry>> = signals
        .par_iter()
        .map(|ls| {
            process_signal(ls, config, out_dir, &assignment, &stream_of)
        })
        .collect::<Result<_>>()?;

    let manifest = DatasetManifest::from_entries(per_signal.into_iter().flatten().collect(), config.seed);
    let manifest_path = out_dir.join(MANIFEST_FILE_NAME);
    fs::write(&manifest_path, manifest.to_json()).map_err(|e| Error::io(&manifest_path, e))?;
    let classes_path = out_dir.join(CLASSES_FILE_NAME);
    let classes: String = manifest.class_names.iter().map(|n| format!("{n}\n")).collect();
    fs::write(&classes_path, classes).map_err(|e| Error::io(&classes_path, e))?;
    Ok(manifest)
}

fn process_signal(
    ls: &LabeledSignal,
    config: &PipelineConfig,
    out_dir: &Path,
    assignment: &HashMap<&str, Split>,
    stream_of: &HashMap<&str, u64>,
) -> Result<Vec<ManifestEntry>> {
    let label = ls
        .signal
        .source_label()
        .ok_or_else(|| DatasetError::Unlabeled(ls.id.clone()))?;
    let grid = config
        .scale_grid(ls.signal.sample_rate_hz())
        .map_err(|e| stage_err(&ls.id, e))?;
    let segments = segment_signal(&ls.signal, config.window_len, config.overlap)
        .map_err(|e| stage_err(&ls.id, e))?;
    let render = config.render_options();
    let mut entries = Vec::new();
    for (idx, seg) in segments.iter().enumerate() {
        let name = segment_name(&ls.id, idx);
        let split = assignment[name.as_str()];
        let source = format!(
            "{}#{} start={} len={}",
            ls.id,
            idx,
            seg.start_index(),
            seg.len()
        );
        let scalogram = cwt_fft(seg, &grid).map_err(|e| stage_err(&name, e))?;
        let image = spectrogram_image(&scalogram, &render, format!("{source} {}", grid.describe()))
            .map_err(|e| stage_err(&name, e))?;
        let ann = synthesize_annotation(&scalogram, label, config.energy_quantile)
            .map_err(|e| stage_err(&name, e))?;
        let mut entry = ManifestEntry::new(name.clone(), split, Some(label));
        entry.source = Some(source.clone());
        write_pair(out_dir, &entry, &image, &[ann]).map_err(|e| stage_err(&name, e))?;
        entries.push(entry);

        if split != Split::Train || config.augment.copies == 0 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(stream_of[name.as_str()]);
        for copy in 0..config.augment.copies {
            let (aug_image, aug_boxes, tags) =
                augment_once(&image, &[ann], &config.augment, &mut rng)
                    .map_err(|e| stage_err(&name, e))?;
            let aug_name = format!("{name}_aug{copy}");
            let mut aug_entry = ManifestEntry::new(aug_name.clone(), Split::Train, Some(label));
            aug_entry.augmentations = tags;
            aug_entry.source = Some(source.clone());
            write_pair(out_dir, &aug_entry, &aug_image, &aug_boxes)
                .map_err(|e| stage_err(&aug_name, e))?;
            entries.push(aug_entry);
        }
    }
    Ok(entries)
}

/// One random flip/rotation/contrast draw. Tags record what was applied.
pub fn augment_once(
    image: &SpectrogramImage,
    boxes: &[Annotation],
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<(SpectrogramImage, Vec<Annotation>, Vec<String>), DatasetError> {
    let flip = rng.random::<f64>() < cfg.flip_probability;
    let angle = if cfg.max_rotation_deg > 0.0 {
        rng.random_range(-cfg.max_rotation_deg..=cfg.max_rotation_deg)
    } else {
        0.0
    };
    let factor = if cfg.contrast_max > cfg.contrast_min {
        rng.random_range(cfg.contrast_min..=cfg.contrast_max)
    } else {
        cfg.contrast_min
    };
    let mut tags = Vec::new();
    let (mut img, mut bxs) = (image.clone(), boxes.to_vec());
    if flip {
        (img, bxs) = flip_horizontal(&img, &bxs);
        tags.push("flip".to_string());
    }
    (img, bxs) = rotate_small_with(&img, &bxs, angle, cfg.min_box_area_fraction)?;
    tags.push(format!("rotate:{angle:+.3}"));
    img = contrast_jitter(&img, factor)?;
    tags.push(format!("contrast:{factor:.3}"));
    Ok((img, bxs, tags))
}

fn write_pair(
    out_dir: &Path,
    entry: &ManifestEntry,
    image: &SpectrogramImage,
    boxes: &[Annotation],
) -> Result<()> {
    render_png(image, out_dir.join(&entry.image))?;
    write_labels(boxes, out_dir.join(&entry.label))?;
    Ok(())
}

/// Absolute path of a manifest-relative file.
pub fn resolve(dataset_dir: &Path, relative: &str) -> PathBuf {
    dataset_dir.join(relative)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::Colormap;

    fn items(n: usize, classes: usize) -> Vec<DatasetItem> {
        (0..n)
            .map(|i| DatasetItem {
                name: format!("item{i:03}"),
                class: if classes == 0 {
                    None
                } else {
                    FaultClass::from_id((i % classes) as u8)
                },
            })
            .collect()
    }

    /// Every integer vector within one of the quotas that sums to n, choosing
    /// the one that keeps the largest fractional parts rounded up.
    fn apportion_oracle(n: usize, r: [f64; 3]) -> [usize; 3] {
        let q = r.map(|ri| ri * n as f64);
        let mut best: Option<([usize; 3], f64)> = None;
        for a in 0..=n {
            for b in 0..=n - a {
                let c = n - a - b;
                let v = [a, b, c];
                if (0..3).any(|i| (v[i] as f64 - q[i]).abs() >= 1.0) {
                    continue;
                }
                // Sum of fractional parts of the entries rounded up.
                let score: f64 = (0..3)
                    .filter(|&i| v[i] as f64 > q[i])
                    .map(|i| q[i] - q[i].floor())
                    .sum();
                if best.is_none_or(|(_, s)| score >= s) {
                    best = Some((v, score));
                }
            }
        }
        best.unwrap().0
    }

    #[test]
    fn apportion_examples() {
        let r = SplitRatios::default();
        assert_eq!(apportion(10, &r), [8, 1, 1]);
        assert_eq!(apportion(12, &r), [10, 1, 1]);
        assert_eq!(apportion_oracle(12, r.as_array()), [10, 1, 1]);
        for n in 1..60 {
            assert_eq!(apportion(n, &r), apportion_oracle(n, r.as_array()), "n={n}");
        }
    }

    #[test]
    fn split_counts_and_determinism() {
        let it = items(12, 4);
        let a = split_dataset(&it, &SplitRatios::default(), 7).unwrap();
        assert_eq!(a.counts, SplitCounts { train: 10, val: 1, test: 1 });
        let b = split_dataset(&it, &SplitRatios::default(), 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
        let ten = split_dataset(&items(10, 0), &SplitRatios::default(), 1).unwrap();
        assert_eq!(ten.counts, SplitCounts { train: 8, val: 1, test: 1 });
    }

    #[test]
    fn stratification_keeps_classes_in_train() {
        let m = split_dataset(&items(40, 4), &SplitRatios::default(), 3).unwrap();
        for c in FaultClass::ALL {
            let per: Vec<usize> = Split::ALL
                .iter()
                .map(|&s| m.split_entries(s).filter(|e| e.class == Some(c)).count())
                .collect();
            assert_eq!(per, vec![8, 1, 1], "{c}");
        }
    }

    #[test]
    fn split_errors() {
        assert!(matches!(
            split_dataset(&[], &SplitRatios::default(), 0),
            Err(DatasetError::Empty)
        ));
        let bad = SplitRatios { train: 0.8, val: 0.1, test: 0.2 };
        assert!(matches!(
            split_dataset(&items(3, 0), &bad, 0),
            Err(DatasetError::Ratios(_))
        ));
        let mut dup = items(2, 0);
        dup[1].name = dup[0].name.clone();
        assert!(matches!(
            split_dataset(&dup, &SplitRatios::default(), 0),
            Err(DatasetError::DuplicateName(_))
        ));
    }

    fn test_image(h: usize, w: usize) -> SpectrogramImage {
        let px = Matrix::from_vec(h, w, (0..h * w).map(|i| (i % 7) as f64 / 6.0).collect());
        SpectrogramImage::new(px, Colormap::Grayscale, "t").unwrap()
    }

    fn bx(x: f64, y: f64, w: f64, h: f64) -> Annotation {
        Annotation::new(FaultClass::Ball, x, y, w, h).unwrap()
    }

    #[test]
    fn flip_examples() {
        let img = test_image(4, 5);
        let (f, b) = flip_horizontal(&img, &[bx(0.3, 0.4, 0.2, 0.2), bx(0.5, 0.5, 0.4, 0.4)]);
        assert!((b[0].x_center - 0.7).abs() < 1e-15);
        assert_eq!(b[1].x_center, 0.5);
        assert_eq!(f.pixels().get(0, 0), img.pixels().get(0, 4));
        let (ff, bb) = flip_horizontal(&f, &b);
        assert_eq!(ff, img);
        assert!((bb[0].x_center - 0.3).abs() < 1e-15);
        assert_eq!(bb[0].width, 0.2);
    }

    #[test]
    fn rotation_examples() {
        let img = test_image(20, 20);
        let boxes = [bx(0.5, 0.5, 0.2, 0.2)];
        let (same, same_boxes) = rotate_small(&img, &boxes, 0.0).unwrap();
        assert_eq!(same, img);
        assert_eq!(same_boxes, boxes);

        let (_, r) = rotate_small(&img, &boxes, 5.0).unwrap();
        // Corners rotated numerically with an independent 2-D rotation (numpy):
        // 0.2·(cos 5° + sin 5°) = 0.21667008816788075.
        assert!((r[0].width - 0.216_670_088_167_880_75).abs() < 1e-12);
        assert!((r[0].height - 0.216_670_088_167_880_75).abs() < 1e-12);
        assert!((r[0].x_center - 0.5).abs() < 1e-12);

        for angle in [-5.0, -2.5, 3.0, 5.0] {
            let (_, full) = rotate_small(&img, &[bx(0.5, 0.5, 1.0, 1.0)], angle).unwrap();
            assert_eq!(full.len(), 1);
            assert!((full[0].width - 1.0).abs() < 1e-12 && (full[0].height - 1.0).abs() < 1e-12);
            assert!((full[0].x_center - 0.5).abs() < 1e-12);
        }
        assert!(matches!(rotate_small(&img, &boxes, 5.5), Err(DatasetError::Angle(_))));
    }

    #[test]
    fn rotation_fills_corners_with_zero() {
        let img = SpectrogramImage::new(Matrix::filled(40, 40, 1.0), Colormap::Grayscale, "").unwrap();
        let (r, _) = rotate_small(&img, &[], 5.0).unwrap();
        assert_eq!(r.pixels().get(0, 0), 0.0);
        assert_eq!(r.pixels().get(20, 20), 1.0);
    }

    #[test]
    fn sliver_boxes_dropped_after_rotation() {
        let img = test_image(10, 10);
        // Corner box: clipping leaves about 72% of its original area.
        let corner = Annotation::from_corners(FaultClass::Ball, 0.0, 0.0, 0.1, 0.1).unwrap();
        let (_, kept) = rotate_small_with(&img, &[corner], -5.0, 0.5).unwrap();
        assert_eq!(kept.len(), 1);
        assert!(kept[0].area() < corner.area());
        let (_, dropped) = rotate_small_with(&img, &[corner], -5.0, 0.9).unwrap();
        assert!(dropped.is_empty());
    }

    #[test]
    fn contrast_examples() {
        let img = test_image(3, 3);
        assert_eq!(contrast_jitter(&img, 1.0).unwrap(), img);
        let flat = SpectrogramImage::new(Matrix::filled(3, 3, 0.1), Colormap::Grayscale, "").unwrap();
        assert_eq!(contrast_jitter(&flat, 0.8).unwrap(), flat);
        let two = SpectrogramImage::new(Matrix::from_rows(&[vec![0.0, 1.0]]), Colormap::Grayscale, "").unwrap();
        let j = contrast_jitter(&two, 0.8).unwrap();
        assert!((j.pixels().get(0, 0) - 0.1).abs() < 1e-12);
        assert!((j.pixels().get(0, 1) - 0.9).abs() < 1e-12);
        assert!(matches!(contrast_jitter(&img, 1.3), Err(DatasetError::Contrast(_))));
    }

    proptest::proptest! {
        #[test]
        fn flip_is_an_involution(seed in proptest::prelude::any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (h, w) = (rng.random_range(1..12), rng.random_range(1..12));
            let img = SpectrogramImage::new(
                Matrix::from_vec(h, w, (0..h * w).map(|_| rng.random::<f64>()).collect()),
                Colormap::Grayscale, "",
            ).unwrap();
            let bw = rng.random_range(0.01..1.0);
            let x = bw / 2.0 + rng.random::<f64>() * (1.0 - bw);
            let boxes = [bx(x, 0.5, bw, 0.5)];
            let (once, b1) = flip_horizontal(&img, &boxes);
            let (twice, b2) = flip_horizontal(&once, &b1);
            proptest::prop_assert_eq!(twice, img);
            proptest::prop_assert!((b2[0].x_center - x).abs() <= 1e-15);
        }
    }
}

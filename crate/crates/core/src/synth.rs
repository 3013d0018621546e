//! Synthetic lesion masks with known component structure, and degraded
//! probability maps from predictors of known quality.
//!
//! Blobs are placed so that no two touch, even diagonally, which makes the
//! returned blob list the exact 8-connected component decomposition of the
//! mask.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characterization::{connected_components, Connectivity};
use crate::error::{Error, Result};
use crate::plan::{DatasetManifest, ImageRecord, SplitSpec, StyleTag, DEFAULT_TEST_RATIO, DEFAULT_VAL_RATIO};
use crate::raster::{
    mask_file_name, probability_file_name, save_mask, save_probability_map, LesionCode, LesionMask, ProbabilityMap,
};
use crate::rng::SplitMix64;

/// Placement attempts per blob before giving up.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;
/// Sub-centers merged into one coarse blob.
const COARSE_LOBES: usize = 3;
const PREDICTION_STREAM: u64 = 0x5052_4544;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coarseness {
    /// Compact, disc-like blobs.
    #[default]
    Fine,
    /// Each blob is the merge of several overlapping lobes.
    Coarse,
}

impl From<Coarseness> for StyleTag {
    fn from(c: Coarseness) -> Self {
        match c {
            Coarseness::Fine => StyleTag::Fine,
            Coarseness::Coarse => StyleTag::Coarse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Mean blob count per image (Poisson).
    pub mean_count: f64,
    /// Mean blob area in pixels (geometric on 1, 2, ...).
    pub mean_area: f64,
    #[serde(default)]
    pub coarseness: Coarseness,
    /// Predictor quality in [0, 1]: the chance that a pixel keeps its true
    /// value instead of being replaced by noise.
    #[serde(default = "default_quality")]
    pub quality: f64,
    #[serde(default = "default_lesion")]
    pub lesion: LesionCode,
}

fn default_quality() -> f64 {
    1.0
}

fn default_lesion() -> LesionCode {
    LesionCode::Ex
}

impl SynthConfig {
    pub fn new(seed: u64, width: usize, height: usize, mean_count: f64, mean_area: f64) -> Self {
        Self {
            seed,
            width,
            height,
            mean_count,
            mean_area,
            coarseness: Coarseness::Fine,
            quality: 1.0,
            lesion: LesionCode::Ex,
        }
    }

    pub fn coarse(mut self) -> Self {
        self.coarseness = Coarseness::Coarse;
        self
    }

    pub fn with_quality(mut self, quality: f64) -> Self {
        self.quality = quality;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation("synthetic frame must be non-empty".into()));
        }
        if !(self.mean_count >= 0.0 && self.mean_count.is_finite()) {
            return Err(Error::Validation(format!(
                "mean_count {} must be >= 0",
                self.mean_count
            )));
        }
        if !(self.mean_area >= 1.0 && self.mean_area.is_finite()) {
            return Err(Error::Validation(format!("mean_area {} must be >= 1", self.mean_area)));
        }
        check_quality(self.quality)
    }
}

fn check_quality(q: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Validation(format!("quality {q} outside [0, 1]")));
    }
    Ok(())
}

/// One generated lesion. `pixels` are (x, y) in row-major order, so
/// `pixels[0]` is the component's first pixel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blob {
    pub pixels: Vec<(usize, usize)>,
}

impl Blob {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn first_pixel(&self) -> (usize, usize) {
        self.pixels[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthMask {
    pub mask: LesionMask,
    /// Sorted by first pixel in row-major order, like connected components.
    pub blobs: Vec<Blob>,
}

pub fn synth_image_id(index: u64) -> String {
    format!("syn{index:05}")
}

fn lesion_index(l: LesionCode) -> u64 {
    LesionCode::ALL.iter().position(|&c| c == l).unwrap_or(0) as u64
}

/// Mask number `index` for this configuration. Deterministic per
/// (config, index); independent of how many other images are generated.
pub fn generate_mask(config: &SynthConfig, index: u64) -> Result<SynthMask> {
    config.validate()?;
    let (w, h) = (config.width, config.height);
    let mut rng = SplitMix64::derive(config.seed, &[index, lesion_index(config.lesion)]);
    let n_blobs = rng.poisson(config.mean_count);
    let mut mask = LesionMask::empty(synth_image_id(index), config.lesion, w, h)?;
    let mut blobs = Vec::with_capacity(n_blobs as usize);

    for b in 0..n_blobs {
        let area = rng.geometric(config.mean_area) as usize;
        if area > w * h {
            return Err(Error::Packing(format!(
                "blob {b} of {area} px exceeds the {w}x{h} frame"
            )));
        }
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let Some(pixels) = blob_shape(&mut rng, config, area) else {
                continue;
            };
            if pixels.iter().all(|&(x, y)| !touches(&mask, x, y)) {
                placed = Some(pixels);
                break;
            }
        }
        let pixels = placed.ok_or_else(|| {
            Error::Packing(format!(
                "could not place blob {b} ({area} px) without touching others after {MAX_PLACEMENT_ATTEMPTS} attempts"
            ))
        })?;
        for &(x, y) in &pixels {
            mask.set(x, y, true);
        }
        blobs.push(Blob { pixels });
    }
    blobs.sort_by_key(|b| (b.first_pixel().1, b.first_pixel().0));
    Ok(SynthMask { mask, blobs })
}

/// True if (x, y) or any of its 8 neighbours is already set.
fn touches(mask: &LesionMask, x: usize, y: usize) -> bool {
    let (w, h) = (mask.width(), mask.height());
    for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
        for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
            if mask.get(nx, ny) {
                return true;
            }
        }
    }
    false
}

/// The `area` pixels closest to a random center (or to the nearest of
/// several lobe centers in coarse mode). `None` if too few pixels are in
/// reach or the shape falls apart into several pieces.
fn blob_shape(rng: &mut SplitMix64, config: &SynthConfig, area: usize) -> Option<Vec<(usize, usize)>> {
    let (w, h) = (config.width, config.height);
    let cx = rng.next_f64() * w as f64;
    let cy = rng.next_f64() * h as f64;
    let r = (area as f64 / std::f64::consts::PI).sqrt();
    let mut centers = vec![(cx, cy)];
    if config.coarseness == Coarseness::Coarse {
        for _ in 1..COARSE_LOBES {
            let angle = rng.next_f64() * std::f64::consts::TAU;
            let dist = rng.next_f64() * 0.6 * r;
            centers.push((cx + dist * angle.cos(), cy + dist * angle.sin()));
        }
    }
    let reach = 2.0 * r + 3.0;
    let x0 = (cx - reach).floor().max(0.0) as usize;
    let y0 = (cy - reach).floor().max(0.0) as usize;
    let x1 = ((cx + reach).ceil() as usize).min(w - 1);
    let y1 = ((cy + reach).ceil() as usize).min(h - 1);

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let d = centers
                .iter()
                .map(|&(ux, uy)| (px - ux).powi(2) + (py - uy).powi(2))
                .fold(f64::INFINITY, f64::min);
            candidates.push((d, y, x));
        }
    }
    if candidates.len() < area {
        return None;
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pixels: Vec<(usize, usize)> = candidates[..area].iter().map(|&(_, y, x)| (x, y)).collect();
    pixels.sort_by_key(|&(x, y)| (y, x));

    // Near the frame edge the nearest pixels can split into pieces.
    if !is_connected(&pixels, x0, y0, x1 - x0 + 1, y1 - y0 + 1) {
        return None;
    }
    Some(pixels)
}

fn is_connected(pixels: &[(usize, usize)], x0: usize, y0: usize, bw: usize, bh: usize) -> bool {
    let mut bits = vec![false; bw * bh];
    for &(x, y) in pixels {
        bits[(y - y0) * bw + (x - x0)] = true;
    }
    let local = LesionMask::new("blob", LesionCode::Ex, bw, bh, bits).expect("box dims match");
    connected_components(&local, Connectivity::Eight).len() == 1
}

/// Probability map from a predictor of quality `q`: each pixel keeps its
/// true 0/1 value with probability `q` and is otherwise replaced by uniform
/// noise on the 16-bit grid. The noise draw happens for every pixel, so the
/// same seed couples maps across qualities.
pub fn generate_prediction(mask: &LesionMask, quality: f64, seed: u64) -> Result<ProbabilityMap> {
    check_quality(quality)?;
    let mut rng = SplitMix64::derive(seed, &[PREDICTION_STREAM]);
    let probs = mask
        .bits()
        .iter()
        .map(|&truth| {
            let keep = rng.next_f64() < quality;
            let noise = rng.below(65536) as f64 / 65535.0;
            if keep {
                if truth {
                    1.0
                } else {
                    0.0
                }
            } else {
                noise
            }
        })
        .collect();
    ProbabilityMap::new(mask.image_id.clone(), mask.lesion, mask.width(), mask.height(), probs)
}

/// A whole synthetic dataset as read from `synth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDatasetConfig {
    pub dataset_id: String,
    pub n_images: u64,
    #[serde(default = "default_lesions")]
    pub lesions: Vec<LesionCode>,
    /// Seed of the generated split; the generator seed when absent.
    #[serde(default)]
    pub split_seed: Option<u64>,
    #[serde(flatten)]
    pub generator: SynthConfig,
}

fn default_lesions() -> Vec<LesionCode> {
    vec![LesionCode::Ex]
}

impl SynthDatasetConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset_id.is_empty() {
            return Err(Error::Validation("dataset_id must be non-empty".into()));
        }
        if self.lesions.is_empty() {
            return Err(Error::Validation("at least one lesion type is required".into()));
        }
        self.generator.validate()
    }
}

/// Writes `masks/`, `predictions/` and `manifest.json` under `out`, with
/// manifest paths relative to `out`. Images are generated in parallel;
/// output does not depend on the thread count.
pub fn write_dataset(config: &SynthDatasetConfig, out: impl AsRef<Path>) -> Result<DatasetManifest> {
    config.validate()?;
    let out = out.as_ref();
    let mask_dir = out.join("masks");
    let pred_dir = out.join("predictions");
    for d in [&mask_dir, &pred_dir] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut lesions = config.lesions.clone();
    lesions.sort();
    lesions.dedup();

    let images: Vec<ImageRecord> = (0..config.n_images)
        .into_par_iter()
        .map(|index| -> Result<ImageRecord> {
            let image_id = synth_image_id(index);
            let mut masks = BTreeMap::new();
            let mut predictions = BTreeMap::new();
            for &lesion in &lesions {
                let cfg = SynthConfig {
                    lesion,
                    ..config.generator.clone()
                };
                let synth = generate_mask(&cfg, index)?;
                let pred_seed = SplitMix64::derive(cfg.seed, &[index, lesion_index(lesion)]).next_u64();
                let pred = generate_prediction(&synth.mask, cfg.quality, pred_seed)?;
                save_mask(&synth.mask, &mask_dir)?;
                save_probability_map(&pred, &pred_dir)?;
                masks.insert(lesion, PathBuf::from("masks").join(mask_file_name(&image_id, lesion)));
                predictions.insert(
                    lesion,
                    PathBuf::from("predictions").join(probability_file_name(&image_id, lesion)),
                );
            }
            Ok(ImageRecord {
                image_id,
                image: None,
                masks,
                predictions,
            })
        })
        .collect::<Result<_>>()?;

    let manifest = DatasetManifest {
        id: config.dataset_id.clone(),
        style: config.generator.coarseness.into(),
        lesions,
        resolution: Some((config.generator.width, config.generator.height)),
        images,
        split: SplitSpec::Generated {
            seed: config.split_seed.unwrap_or(config.generator.seed),
            test_ratio: DEFAULT_TEST_RATIO,
            val_ratio: DEFAULT_VAL_RATIO,
        },
    };
    manifest.validate()?;
    manifest.save(out.join("manifest.json"))?;
    Ok(manifest)
}

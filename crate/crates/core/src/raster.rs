//! Masks, probability maps and fundus images, their PNG encodings, and the
//! deterministic framing geometry (background crop, resize-and-pad, patch
//! grids) shared by predictions, ground truth and characterization.
//!
//! File naming:
//! - masks: `<image_id>.<LESION>.png`, 8-bit grayscale, nonzero = lesion
//! - probability maps: `<image_id>.<LESION>.prob.png`, 16-bit grayscale, p = v / 65535
//! - fundus images: 8-bit RGB PNG

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TARGET_SIDE: usize = 1536;
pub const DEFAULT_BACKGROUND_THRESHOLD: u8 = 10;
const PROB_SCALE: f64 = 65535.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LesionCode {
    /// Hard exudate.
    #[serde(rename = "EX")]
    Ex,
    /// Cotton wool spot.
    #[serde(rename = "CWS")]
    Cws,
    /// Hemorrhage.
    #[serde(rename = "HE")]
    He,
    /// Microaneurysm.
    #[serde(rename = "MA")]
    Ma,
}

impl LesionCode {
    pub const ALL: [LesionCode; 4] = [LesionCode::Ex, LesionCode::Cws, LesionCode::He, LesionCode::Ma];

    pub fn as_str(self) -> &'static str {
        match self {
            LesionCode::Ex => "EX",
            LesionCode::Cws => "CWS",
            LesionCode::He => "HE",
            LesionCode::Ma => "MA",
        }
    }
}

impl fmt::Display for LesionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LesionCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "EX" => Ok(LesionCode::Ex),
            "CWS" => Ok(LesionCode::Cws),
            "HE" => Ok(LesionCode::He),
            "MA" => Ok(LesionCode::Ma),
            _ => Err(Error::Naming(format!("unknown lesion code `{s}`"))),
        }
    }
}

/// Binary ground-truth (or binarized prediction) raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LesionMask {
    pub image_id: String,
    pub lesion: LesionCode,
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl LesionMask {
    pub fn new(
        image_id: impl Into<String>,
        lesion: LesionCode,
        width: usize,
        height: usize,
        bits: Vec<bool>,
    ) -> Result<Self> {
        check_dims(width, height, bits.len())?;
        Ok(Self {
            image_id: image_id.into(),
            lesion,
            width,
            height,
            bits,
        })
    }

    pub fn empty(image_id: impl Into<String>, lesion: LesionCode, width: usize, height: usize) -> Result<Self> {
        Self::new(image_id, lesion, width, height, vec![false; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }
}

/// Real-valued per-pixel lesion probability, row-major, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub image_id: String,
    pub lesion: LesionCode,
    width: usize,
    height: usize,
    probs: Vec<f64>,
}

impl ProbabilityMap {
    pub fn new(
        image_id: impl Into<String>,
        lesion: LesionCode,
        width: usize,
        height: usize,
        probs: Vec<f64>,
    ) -> Result<Self> {
        check_dims(width, height, probs.len())?;
        if let Some(bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Validation(format!("probability {bad} outside [0, 1]")));
        }
        Ok(Self {
            image_id: image_id.into(),
            lesion,
            width,
            height,
            probs,
        })
    }

    /// Hard 0/1 probabilities from a mask.
    pub fn from_mask(mask: &LesionMask) -> Self {
        Self {
            image_id: mask.image_id.clone(),
            lesion: mask.lesion,
            width: mask.width,
            height: mask.height,
            probs: mask.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.probs[y * self.width + x]
    }
}

/// 3-channel 8-bit image, interleaved RGB, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FundusImage {
    pub image_id: String,
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl FundusImage {
    pub fn new(image_id: impl Into<String>, width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation("image dimensions must be positive".into()));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::Validation(format!(
                "expected {} RGB bytes, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(Self {
            image_id: image_id.into(),
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Validation("raster dimensions must be at least 1x1".into()));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::Validation(format!(
            "raster of {width}x{height} needs {} values, got {len}",
            width * height
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// File naming and PNG I/O
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterKind {
    Mask,
    Probability,
}

/// Splits `<image_id>.<LESION>[.prob].png` into its parts.
pub fn parse_raster_name(file_name: &str) -> Result<(RasterKind, String, LesionCode)> {
    let stem = file_name
        .strip_suffix(".png")
        .ok_or_else(|| Error::Naming(format!("`{file_name}` is not a .png file")))?;
    let (kind, stem) = match stem.strip_suffix(".prob") {
        Some(s) => (RasterKind::Probability, s),
        None => (RasterKind::Mask, stem),
    };
    let (image_id, code) = stem
        .rsplit_once('.')
        .ok_or_else(|| Error::Naming(format!("`{file_name}` lacks a lesion code")))?;
    if image_id.is_empty() {
        return Err(Error::Naming(format!("`{file_name}` has an empty image id")));
    }
    let lesion = code
        .parse()
        .map_err(|_| Error::Naming(format!("unknown lesion code `{code}` in `{file_name}`")))?;
    Ok((kind, image_id.to_string(), lesion))
}

pub fn mask_file_name(image_id: &str, lesion: LesionCode) -> String {
    format!("{image_id}.{lesion}.png")
}

pub fn probability_file_name(image_id: &str, lesion: LesionCode) -> String {
    format!("{image_id}.{lesion}.prob.png")
}

/// A raster file found in a directory listing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterEntry {
    pub path: PathBuf,
    pub file_name: String,
    pub image_id: String,
    pub lesion: LesionCode,
}

/// Lists rasters of `kind` in `dir`, sorted by file name. Files that do not
/// follow the naming convention for `kind` are skipped.
pub fn list_rasters(dir: &Path, kind: RasterKind) -> Result<Vec<RasterEntry>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let Some(name) = entry.file_name().to_str().map(str::to_owned) else {
            continue;
        };
        if let Ok((k, image_id, lesion)) = parse_raster_name(&name) {
            if k == kind {
                out.push(RasterEntry {
                    path: entry.path(),
                    file_name: name,
                    image_id,
                    lesion,
                });
            }
        }
    }
    out.sort_by(|a, b| a.file_name.cmp(&b.file_name));
    Ok(out)
}

fn file_name_of(path: &Path) -> Result<&str> {
    path.file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Naming(format!("`{}` has no usable file name", path.display())))
}

fn open_png(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<LesionMask> {
    let path = path.as_ref();
    let (_, image_id, lesion) = parse_raster_name(file_name_of(path)?)?;
    let img = match open_png(path)? {
        image::DynamicImage::ImageLuma8(img) => img,
        other => {
            return Err(Error::Format(format!(
                "{}: masks must be 8-bit single-channel, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = img.dimensions();
    let bits = img.into_raw().into_iter().map(|v| v > 0).collect();
    LesionMask::new(image_id, lesion, w as usize, h as usize, bits)
}

pub fn load_probability_map(path: impl AsRef<Path>) -> Result<ProbabilityMap> {
    let path = path.as_ref();
    let (_, image_id, lesion) = parse_raster_name(file_name_of(path)?)?;
    let img = match open_png(path)? {
        image::DynamicImage::ImageLuma16(img) => img,
        other => {
            return Err(Error::Format(format!(
                "{}: probability maps must be 16-bit single-channel, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = img.dimensions();
    let probs = img.into_raw().into_iter().map(|v| v as f64 / PROB_SCALE).collect();
    ProbabilityMap::new(image_id, lesion, w as usize, h as usize, probs)
}

pub fn load_fundus_image(path: impl AsRef<Path>) -> Result<FundusImage> {
    let path = path.as_ref();
    let image_id = file_name_of(path)?
        .strip_suffix(".png")
        .unwrap_or(file_name_of(path)?)
        .to_string();
    let img = match open_png(path)? {
        image::DynamicImage::ImageRgb8(img) => img,
        other => {
            return Err(Error::Format(format!(
                "{}: fundus images must be 8-bit RGB, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = img.dimensions();
    FundusImage::new(image_id, w as usize, h as usize, img.into_raw())
}

fn save_err(path: &Path) -> impl FnOnce(image::ImageError) -> Error + '_ {
    move |e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes `mask` as `<dir>/<image_id>.<LESION>.png` and returns the path.
pub fn save_mask(mask: &LesionMask, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let path = dir.as_ref().join(mask_file_name(&mask.image_id, mask.lesion));
    let data: Vec<u8> = mask.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
    let img: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(mask.width as u32, mask.height as u32, data).expect("sized buffer");
    img.save(&path).map_err(save_err(&path))?;
    Ok(path)
}

/// 16-bit level used to store probability `p`.
pub fn quantize_probability(p: f64) -> u16 {
    (p.clamp(0.0, 1.0) * PROB_SCALE).round() as u16
}

/// Writes `map` as `<dir>/<image_id>.<LESION>.prob.png` and returns the path.
pub fn save_probability_map(map: &ProbabilityMap, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let path = dir.as_ref().join(probability_file_name(&map.image_id, map.lesion));
    let data: Vec<u16> = map.probs.iter().map(|&p| quantize_probability(p)).collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(map.width as u32, map.height as u32, data).expect("sized buffer");
    img.save(&path).map_err(save_err(&path))?;
    Ok(path)
}

pub fn save_fundus_image(image: &FundusImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let img: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(image.width as u32, image.height as u32, image.pixels.clone()).expect("sized buffer");
    img.save(path).map_err(save_err(path))
}

// ---------------------------------------------------------------------------
// Generic raster access used by the geometry operations
// ---------------------------------------------------------------------------

/// Uniform sample access so the geometry code works on masks, probability
/// maps and RGB images alike.
pub trait Raster: Sized {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn channels(&self) -> usize {
        1
    }
    fn sample(&self, x: usize, y: usize, channel: usize) -> f64;
    /// New raster with the same identity, built from interleaved samples.
    fn rebuild(&self, width: usize, height: usize, samples: Vec<f64>) -> Self;
}

impl Raster for LesionMask {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn sample(&self, x: usize, y: usize, _: usize) -> f64 {
        if self.get(x, y) {
            1.0
        } else {
            0.0
        }
    }
    fn rebuild(&self, width: usize, height: usize, samples: Vec<f64>) -> Self {
        LesionMask {
            image_id: self.image_id.clone(),
            lesion: self.lesion,
            width,
            height,
            bits: samples.into_iter().map(|v| v >= 0.5).collect(),
        }
    }
}

impl Raster for ProbabilityMap {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn sample(&self, x: usize, y: usize, _: usize) -> f64 {
        self.get(x, y)
    }
    fn rebuild(&self, width: usize, height: usize, samples: Vec<f64>) -> Self {
        ProbabilityMap {
            image_id: self.image_id.clone(),
            lesion: self.lesion,
            width,
            height,
            probs: samples.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }
}

impl Raster for FundusImage {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn channels(&self) -> usize {
        3
    }
    fn sample(&self, x: usize, y: usize, channel: usize) -> f64 {
        self.pixels[(y * self.width + x) * 3 + channel] as f64
    }
    fn rebuild(&self, width: usize, height: usize, samples: Vec<f64>) -> Self {
        FundusImage {
            image_id: self.image_id.clone(),
            width,
            height,
            pixels: samples.into_iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Framing geometry
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub left: usize,
    pub top: usize,
    pub width: usize,
    pub height: usize,
}

impl CropRect {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            left: 0,
            top: 0,
            width,
            height,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpolation {
    /// For masks; keeps binary rasters binary.
    Nearest,
    /// For images and probability maps.
    Bilinear,
}

/// Crop, uniform scale and centered zero padding taking a source frame to a
/// fixed target frame.
///
/// Pixel `i` covers the continuous interval `[i, i + 1)`. A target pixel
/// center `t + 0.5` inside the placed region maps back to the source
/// coordinate `crop.left + (t + 0.5 - pad_x) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTransform {
    pub source_width: usize,
    pub source_height: usize,
    pub crop: CropRect,
    pub scale: f64,
    pub pad_x: usize,
    pub pad_y: usize,
    pub target_width: usize,
    pub target_height: usize,
}

impl FrameTransform {
    pub fn identity(width: usize, height: usize) -> Self {
        Self {
            source_width: width,
            source_height: height,
            crop: CropRect::full(width, height),
            scale: 1.0,
            pad_x: 0,
            pad_y: 0,
            target_width: width,
            target_height: height,
        }
    }

    /// Fits `crop` into a `target_side` square, preserving aspect ratio and
    /// centering the result.
    pub fn fit(source_width: usize, source_height: usize, crop: CropRect, target_side: usize) -> Result<Self> {
        if target_side == 0 {
            return Err(Error::Transform("target size must be positive".into()));
        }
        if crop.width == 0 || crop.height == 0 {
            return Err(Error::Transform("crop rectangle is empty".into()));
        }
        let scale = target_side as f64 / crop.width.max(crop.height) as f64;
        let mut t = Self {
            source_width,
            source_height,
            crop,
            scale,
            pad_x: 0,
            pad_y: 0,
            target_width: target_side,
            target_height: target_side,
        };
        let (pw, ph) = t.placed_size();
        t.pad_x = (target_side - pw) / 2;
        t.pad_y = (target_side - ph) / 2;
        t.validate()?;
        Ok(t)
    }

    /// Size of the scaled crop inside the target frame.
    pub fn placed_size(&self) -> (usize, usize) {
        let w = ((self.crop.width as f64 * self.scale).round() as usize).clamp(1, self.target_width.max(1));
        let h = ((self.crop.height as f64 * self.scale).round() as usize).clamp(1, self.target_height.max(1));
        (w, h)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.crop;
        if c.width == 0 || c.height == 0 {
            return Err(Error::Transform("crop rectangle is empty".into()));
        }
        if c.left + c.width > self.source_width || c.top + c.height > self.source_height {
            return Err(Error::Transform(format!(
                "crop {c:?} exceeds source {}x{}",
                self.source_width, self.source_height
            )));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::Transform(format!("scale {} must be positive", self.scale)));
        }
        let (pw, ph) = self.placed_size();
        if self.pad_x + pw > self.target_width || self.pad_y + ph > self.target_height {
            return Err(Error::Transform(
                "scaled crop does not fit the target after padding".into(),
            ));
        }
        Ok(())
    }

    /// Continuous source coordinate of the center of target pixel `(tx, ty)`,
    /// or `None` in the padding.
    pub fn source_of(&self, tx: usize, ty: usize) -> Option<(f64, f64)> {
        let (pw, ph) = self.placed_size();
        if tx < self.pad_x || ty < self.pad_y || tx >= self.pad_x + pw || ty >= self.pad_y + ph {
            return None;
        }
        let sx = self.crop.left as f64 + ((tx - self.pad_x) as f64 + 0.5) / self.scale;
        let sy = self.crop.top as f64 + ((ty - self.pad_y) as f64 + 0.5) / self.scale;
        Some((sx, sy))
    }

    /// Continuous target coordinate of continuous source coordinate `(sx, sy)`.
    pub fn target_of(&self, sx: f64, sy: f64) -> (f64, f64) {
        (
            self.pad_x as f64 + (sx - self.crop.left as f64) * self.scale,
            self.pad_y as f64 + (sy - self.crop.top as f64) * self.scale,
        )
    }
}

/// Tight bounding box of the pixels whose brightest channel exceeds
/// `background_threshold`, framed into the default 1536 square.
pub fn compute_crop(image: &FundusImage, background_threshold: u8) -> Result<FrameTransform> {
    compute_crop_to(image, background_threshold, DEFAULT_TARGET_SIDE)
}

pub fn compute_crop_to(image: &FundusImage, background_threshold: u8, target_side: usize) -> Result<FrameTransform> {
    let mut bounds: Option<(usize, usize, usize, usize)> = None;
    for y in 0..image.height {
        for x in 0..image.width {
            let max = image.rgb(x, y).into_iter().max().unwrap_or(0);
            if max > background_threshold {
                bounds = Some(match bounds {
                    None => (x, y, x, y),
                    Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                });
            }
        }
    }
    let (x0, y0, x1, y1) = bounds.ok_or_else(|| {
        Error::EmptyContent(format!(
            "`{}` has no pixel brighter than {background_threshold}",
            image.image_id
        ))
    })?;
    let crop = CropRect {
        left: x0,
        top: y0,
        width: x1 - x0 + 1,
        height: y1 - y0 + 1,
    };
    FrameTransform::fit(image.width, image.height, crop, target_side)
}

/// Resamples `raster` into the transform's target frame. Padding is zero.
pub fn apply_transform<R: Raster>(raster: &R, transform: &FrameTransform, interpolation: Interpolation) -> Result<R> {
    if raster.width() != transform.source_width || raster.height() != transform.source_height {
        return Err(Error::Transform(format!(
            "raster is {}x{} but the transform expects {}x{}",
            raster.width(),
            raster.height(),
            transform.source_width,
            transform.source_height
        )));
    }
    transform.validate()?;
    let channels = raster.channels();
    let (tw, th) = (transform.target_width, transform.target_height);
    let crop = transform.crop;
    let (x_lo, x_hi) = (crop.left, crop.left + crop.width - 1);
    let (y_lo, y_hi) = (crop.top, crop.top + crop.height - 1);
    let mut out = vec![0.0; tw * th * channels];
    for ty in 0..th {
        for tx in 0..tw {
            let Some((sx, sy)) = transform.source_of(tx, ty) else {
                continue;
            };
            let base = (ty * tw + tx) * channels;
            match interpolation {
                Interpolation::Nearest => {
                    let x = (sx.floor().max(0.0) as usize).clamp(x_lo, x_hi);
                    let y = (sy.floor().max(0.0) as usize).clamp(y_lo, y_hi);
                    for c in 0..channels {
                        out[base + c] = raster.sample(x, y, c);
                    }
                }
                Interpolation::Bilinear => {
                    let fx = (sx - 0.5).clamp(x_lo as f64, x_hi as f64);
                    let fy = (sy - 0.5).clamp(y_lo as f64, y_hi as f64);
                    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
                    let (x1, y1) = ((x0 + 1).min(x_hi), (y0 + 1).min(y_hi));
                    let (ax, ay) = (fx - x0 as f64, fy - y0 as f64);
                    for c in 0..channels {
                        let top = raster.sample(x0, y0, c) * (1.0 - ax) + raster.sample(x1, y0, c) * ax;
                        let bottom = raster.sample(x0, y1, c) * (1.0 - ax) + raster.sample(x1, y1, c) * ax;
                        out[base + c] = top * (1.0 - ay) + bottom * ay;
                    }
                }
            }
        }
    }
    Ok(raster.rebuild(tw, th, out))
}

/// Copies the pixels of `rect` out of `raster`.
pub fn crop<R: Raster>(raster: &R, rect: CropRect) -> Result<R> {
    if rect.width == 0
        || rect.height == 0
        || rect.left + rect.width > raster.width()
        || rect.top + rect.height > raster.height()
    {
        return Err(Error::Transform(format!(
            "crop {rect:?} outside {}x{} raster",
            raster.width(),
            raster.height()
        )));
    }
    let channels = raster.channels();
    let mut out = Vec::with_capacity(rect.width * rect.height * channels);
    for y in rect.top..rect.top + rect.height {
        for x in rect.left..rect.left + rect.width {
            for c in 0..channels {
                out.push(raster.sample(x, y, c));
            }
        }
    }
    Ok(raster.rebuild(rect.width, rect.height, out))
}

/// Top-left corner of a patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PatchOrigin {
    pub x: usize,
    pub y: usize,
}

fn axis_starts(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut starts: Vec<usize> = (0..=len - patch).step_by(stride).collect();
    if *starts.last().expect("len >= patch") + patch < len {
        starts.push(len - patch);
    }
    starts
}

/// Row-major grid of patch origins covering a `width` x `height` raster.
/// The last row and column are anchored to the raster edge.
pub fn patch_grid(width: usize, height: usize, patch_size: usize, stride: usize) -> Result<Vec<PatchOrigin>> {
    if patch_size == 0 || stride == 0 {
        return Err(Error::Size("patch size and stride must be positive".into()));
    }
    if patch_size > width || patch_size > height {
        return Err(Error::Size(format!(
            "patch {patch_size} larger than raster {width}x{height}"
        )));
    }
    let xs = axis_starts(width, patch_size, stride);
    let ys = axis_starts(height, patch_size, stride);
    Ok(ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| PatchOrigin { x, y }))
        .collect())
}

pub fn extract_patches<R: Raster>(raster: &R, patch_size: usize, stride: usize) -> Result<Vec<(PatchOrigin, R)>> {
    patch_grid(raster.width(), raster.height(), patch_size, stride)?
        .into_iter()
        .map(|o| {
            let rect = CropRect {
                left: o.x,
                top: o.y,
                width: patch_size,
                height: patch_size,
            };
            Ok((o, crop(raster, rect)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from_rows(rows: &[&str]) -> LesionMask {
        let h = rows.len();
        let w = rows[0].len();
        let bits = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        LesionMask::new("img", LesionCode::Ex, w, h, bits).unwrap()
    }

    #[test]
    fn parses_file_names() {
        assert_eq!(
            parse_raster_name("IDR_01.EX.png").unwrap(),
            (RasterKind::Mask, "IDR_01".to_string(), LesionCode::Ex)
        );
        assert_eq!(
            parse_raster_name("a.b.MA.prob.png").unwrap(),
            (RasterKind::Probability, "a.b".to_string(), LesionCode::Ma)
        );
        assert!(matches!(parse_raster_name("x.NV.png"), Err(Error::Naming(_))));
        assert!(matches!(parse_raster_name("x.png"), Err(Error::Naming(_))));
    }

    #[test]
    fn mask_png_thresholds_at_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("im.HE.png");
        let raw = vec![0u8, 255, 0, 255, 255, 0];
        let img: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(3, 2, raw).unwrap();
        img.save(&path).unwrap();
        let m = load_mask(&path).unwrap();
        assert_eq!(m.bits(), &[false, true, false, true, true, false]);
        assert_eq!(m.lesion, LesionCode::He);
        assert_eq!(m.image_id, "im");
    }

    #[test]
    fn probability_endpoints() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("im.MA.prob.png");
        let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(2, 1, vec![65535, 0]).unwrap();
        img.save(&path).unwrap();
        let p = load_probability_map(&path).unwrap();
        assert_eq!(p.probs(), &[1.0, 0.0]);
    }

    #[test]
    fn rgb_png_is_not_a_mask() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("im.EX.png");
        let img: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_raw(1, 1, vec![1, 2, 3]).unwrap();
        img.save(&path).unwrap();
        assert!(matches!(load_mask(&path), Err(Error::Format(_))));
        // 8-bit data is not a probability map either.
        let path8 = dir.path().join("im.EX.prob.png");
        let img: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(1, 1, vec![1]).unwrap();
        img.save(&path8).unwrap();
        assert!(matches!(load_probability_map(&path8), Err(Error::Format(_))));
    }

    #[test]
    fn mask_and_probability_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = mask_from_rows(&["#..#", ".##.", "...."]);
        let back = load_mask(save_mask(&m, dir.path()).unwrap()).unwrap();
        assert_eq!(back, m);

        let probs: Vec<f64> = (0..12).map(|i| (i * 5000) as f64 / 65535.0).collect();
        let p = ProbabilityMap::new("img", LesionCode::Cws, 4, 3, probs).unwrap();
        let back = load_probability_map(save_probability_map(&p, dir.path()).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn probability_values_must_be_in_range() {
        assert!(ProbabilityMap::new("i", LesionCode::Ex, 1, 1, vec![1.5]).is_err());
        assert!(ProbabilityMap::new("i", LesionCode::Ex, 2, 1, vec![0.5]).is_err());
    }

    fn image_with_box(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> FundusImage {
        let mut px = vec![0u8; w * h * 3];
        for y in y0..=y1 {
            for x in x0..=x1 {
                px[(y * w + x) * 3 + 1] = 200;
            }
        }
        FundusImage::new("f", w, h, px).unwrap()
    }

    #[test]
    fn tight_image_crops_to_full_frame() {
        let img = image_with_box(40, 20, 0, 0, 39, 19);
        let t = compute_crop_to(&img, 10, 80).unwrap();
        assert_eq!(t.crop, CropRect::full(40, 20));
        assert_eq!(t.scale, 2.0);
        assert_eq!(t.placed_size(), (80, 40));
        assert_eq!((t.pad_x, t.pad_y), (0, 20));
    }

    #[test]
    fn all_black_is_empty_content() {
        let img = FundusImage::new("f", 4, 4, vec![5; 48]).unwrap();
        assert!(matches!(compute_crop(&img, 10), Err(Error::EmptyContent(_))));
    }

    #[test]
    fn crop_is_idempotent() {
        let img = image_with_box(50, 40, 7, 5, 30, 33);
        let t = compute_crop(&img, 10).unwrap();
        let cropped = crop(&img, t.crop).unwrap();
        let again = compute_crop(&cropped, 10).unwrap();
        assert_eq!(again.crop, CropRect::full(cropped.width(), cropped.height()));
    }

    #[test]
    fn identity_transform_is_identity() {
        let m = mask_from_rows(&["#..#.", ".##..", "....#"]);
        let t = FrameTransform::identity(5, 3);
        assert_eq!(apply_transform(&m, &t, Interpolation::Nearest).unwrap(), m);

        let probs: Vec<f64> = (0..15).map(|i| i as f64 / 14.0).collect();
        let p = ProbabilityMap::new("p", LesionCode::Ex, 5, 3, probs).unwrap();
        assert_eq!(apply_transform(&p, &t, Interpolation::Bilinear).unwrap(), p);

        let img = image_with_box(5, 3, 1, 1, 3, 2);
        assert_eq!(apply_transform(&img, &t, Interpolation::Bilinear).unwrap(), img);
    }

    #[test]
    fn center_pad_preserves_lesion_count() {
        // Scale 1 into a larger square is a pure translation.
        let m = mask_from_rows(&["#..#", ".##.", "#..."]);
        let t = FrameTransform::fit(4, 3, CropRect::full(4, 3), 4).unwrap();
        let square = apply_transform(&m, &t, Interpolation::Nearest).unwrap();
        assert_eq!(square.count(), m.count());
        assert_eq!((square.width(), square.height()), (4, 4));
        // One padding row split as 0 above, 1 below.
        assert_eq!(t.pad_y, 0);
        assert!(!square.bits()[12..].iter().any(|&b| b));
    }

    #[test]
    fn dimension_mismatch_is_transform_error() {
        let m = mask_from_rows(&["#.", ".#"]);
        let t = FrameTransform::identity(3, 2);
        assert!(matches!(
            apply_transform(&m, &t, Interpolation::Nearest),
            Err(Error::Transform(_))
        ));
    }

    #[test]
    fn patch_grid_counts() {
        assert_eq!(patch_grid(1536, 1536, 512, 512).unwrap().len(), 9);
        assert_eq!(patch_grid(1536, 1536, 512, 256).unwrap().len(), 25);
        assert!(matches!(patch_grid(500, 500, 512, 512), Err(Error::Size(_))));
        // 700 wide, stride 512: origins 0 and the edge-anchored 188.
        let g = patch_grid(700, 512, 512, 512).unwrap();
        assert_eq!(g, vec![PatchOrigin { x: 0, y: 0 }, PatchOrigin { x: 188, y: 0 }]);
    }

    #[test]
    fn extracted_patches_copy_pixels() {
        let m = mask_from_rows(&["#...", ".#..", "..#.", "...#"]);
        let patches = extract_patches(&m, 2, 2).unwrap();
        assert_eq!(patches.len(), 4);
        assert_eq!(patches[0].1.bits(), &[true, false, false, true]);
        assert_eq!(patches[1].1.bits(), &[false; 4]);
        assert_eq!(patches[3].0, PatchOrigin { x: 2, y: 2 });
    }

    #[test]
    fn forward_and_inverse_agree() {
        let t = FrameTransform::fit(
            300,
            200,
            CropRect {
                left: 10,
                top: 20,
                width: 150,
                height: 100,
            },
            64,
        )
        .unwrap();
        for (tx, ty) in [(0usize, 11usize), (31, 31), (63, 52)] {
            if let Some((sx, sy)) = t.source_of(tx, ty) {
                let (bx, by) = t.target_of(sx, sy);
                assert!((bx - (tx as f64 + 0.5)).abs() < 1e-9);
                assert!((by - (ty as f64 + 0.5)).abs() < 1e-9);
            }
        }
    }
}

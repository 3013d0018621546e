//! Labelling-style characterization of lesion datasets.
//!
//! Per-image lesion count and mean lesion area come from connected
//! components; per-dataset summaries live in log10 space, where coarse
//! annotation (few large regions) sits in the lower-right of the
//! (area, count) plane and fine annotation (many small regions) in the
//! upper-left.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{LesionCode, LesionMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    /// Edge neighbours only.
    Four,
    /// Edge and corner neighbours.
    #[default]
    Eight,
}

impl FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "4" => Ok(Connectivity::Four),
            "8" => Ok(Connectivity::Eight),
            other => Err(Error::Parse(format!("connectivity must be 4 or 8, got `{other}`"))),
        }
    }
}

/// A maximal connected lesion region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub area: u64,
    /// First pixel of the region in row-major order, as (x, y).
    pub first_pixel: (usize, usize),
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Two-pass union-find labelling. Components are returned in the order of
/// their first pixel in a row-major scan.
pub fn connected_components(mask: &LesionMask, connectivity: Connectivity) -> Vec<Component> {
    let (w, h) = (mask.width(), mask.height());
    const NONE: u32 = u32::MAX;
    let mut labels = vec![NONE; w * h];
    let mut sets = DisjointSet { parent: Vec::new() };

    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let mut neighbours = [NONE; 4];
            if x > 0 {
                neighbours[0] = labels[y * w + x - 1];
            }
            if y > 0 {
                neighbours[1] = labels[(y - 1) * w + x];
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        neighbours[2] = labels[(y - 1) * w + x - 1];
                    }
                    if x + 1 < w {
                        neighbours[3] = labels[(y - 1) * w + x + 1];
                    }
                }
            }
            let label = match neighbours.iter().copied().filter(|&l| l != NONE).min() {
                Some(l) => l,
                None => {
                    let l = sets.parent.len() as u32;
                    sets.parent.push(l);
                    l
                }
            };
            for &n in neighbours.iter().filter(|&&n| n != NONE) {
                sets.union(label, n);
            }
            labels[y * w + x] = label;
        }
    }

    let mut slot_of_root = vec![NONE; sets.parent.len()];
    let mut out: Vec<Component> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == NONE {
                continue;
            }
            let root = sets.find(l) as usize;
            if slot_of_root[root] == NONE {
                slot_of_root[root] = out.len() as u32;
                out.push(Component {
                    area: 0,
                    first_pixel: (x, y),
                });
            }
            out[slot_of_root[root] as usize].area += 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionStats {
    pub image_id: String,
    pub lesion: LesionCode,
    pub lesion_count: u64,
    /// Mean component area in pixels; absent when there are no lesions.
    pub mean_area: Option<f64>,
    pub total_area: u64,
    /// Resolution the areas were measured at.
    pub width: usize,
    pub height: usize,
}

pub fn lesion_stats(mask: &LesionMask) -> LesionStats {
    lesion_stats_with(mask, Connectivity::Eight)
}

pub fn lesion_stats_with(mask: &LesionMask, connectivity: Connectivity) -> LesionStats {
    let comps = connected_components(mask, connectivity);
    let total: u64 = comps.iter().map(|c| c.area).sum();
    let count = comps.len() as u64;
    LesionStats {
        image_id: mask.image_id.clone(),
        lesion: mask.lesion,
        lesion_count: count,
        mean_area: (count > 0).then(|| total as f64 / count as f64),
        total_area: total,
        width: mask.width(),
        height: mask.height(),
    }
}

/// Equal-width bins over one log10 axis. Values outside the range fall into
/// the first or last bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinAxis {
    pub lo: f64,
    pub width: f64,
    pub bins: usize,
}

impl BinAxis {
    fn index(&self, v: f64) -> usize {
        let i = ((v - self.lo) / self.width).floor();
        if i < 0.0 {
            0
        } else {
            (i as usize).min(self.bins - 1)
        }
    }

    pub fn lower_edge(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub log_area: BinAxis,
    pub log_count: BinAxis,
}

impl Default for HistogramSpec {
    /// Quarter-decade bins: area 1..10^5 px, count 1..10^3.5.
    fn default() -> Self {
        Self {
            log_area: BinAxis {
                lo: 0.0,
                width: 0.25,
                bins: 20,
            },
            log_count: BinAxis {
                lo: 0.0,
                width: 0.25,
                bins: 14,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2d {
    pub spec: HistogramSpec,
    /// `counts[area_bin][count_bin]`.
    pub counts: Vec<Vec<u64>>,
}

impl Histogram2d {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Rows of (area bin lower edge, count bin lower edge, images).
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, u64)> + '_ {
        self.counts.iter().enumerate().flat_map(move |(ai, row)| {
            row.iter()
                .enumerate()
                .map(move |(ci, &n)| (self.spec.log_area.lower_edge(ai), self.spec.log_count.lower_edge(ci), n))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogSpread {
    pub median_log_count: f64,
    pub median_log_area: f64,
    pub iqr_log_count: f64,
    pub iqr_log_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleSummary {
    pub dataset_id: String,
    pub lesion: LesionCode,
    pub n_images: usize,
    /// Images with at least one lesion; only these enter the summary.
    pub n_contributing: usize,
    /// `None` when no image has a lesion.
    pub spread: Option<LogSpread>,
    pub histogram: Histogram2d,
}

impl StyleSummary {
    pub fn is_empty(&self) -> bool {
        self.spread.is_none()
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn median_iqr(mut values: Vec<f64>) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    (
        quantile(&values, 0.5),
        quantile(&values, 0.75) - quantile(&values, 0.25),
    )
}

pub fn style_summary(dataset_id: &str, stats: &[LesionStats], bins: HistogramSpec) -> Result<StyleSummary> {
    if bins.log_area.bins == 0 || bins.log_count.bins == 0 || bins.log_area.width <= 0.0 || bins.log_count.width <= 0.0
    {
        return Err(Error::Validation(
            "histogram axes need positive bin counts and widths".into(),
        ));
    }
    let lesion = stats
        .first()
        .map(|s| s.lesion)
        .ok_or_else(|| Error::Arity("style summary needs at least one image".into()))?;
    if let Some(other) = stats.iter().find(|s| s.lesion != lesion) {
        return Err(Error::Consistency(format!(
            "style summary mixes {lesion} and {}",
            other.lesion
        )));
    }
    let points: Vec<(f64, f64)> = stats
        .iter()
        .filter_map(|s| s.mean_area.map(|a| (a.log10(), (s.lesion_count as f64).log10())))
        .collect();

    let mut counts = vec![vec![0u64; bins.log_count.bins]; bins.log_area.bins];
    for &(la, lc) in &points {
        counts[bins.log_area.index(la)][bins.log_count.index(lc)] += 1;
    }

    let spread = (!points.is_empty()).then(|| {
        let (median_log_area, iqr_log_area) = median_iqr(points.iter().map(|p| p.0).collect());
        let (median_log_count, iqr_log_count) = median_iqr(points.iter().map(|p| p.1).collect());
        LogSpread {
            median_log_count,
            median_log_area,
            iqr_log_count,
            iqr_log_area,
        }
    });

    Ok(StyleSummary {
        dataset_id: dataset_id.to_string(),
        lesion,
        n_images: stats.len(),
        n_contributing: points.len(),
        spread,
        histogram: Histogram2d { spec: bins, counts },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StyleRelation {
    Coarser,
    Finer,
    Overlapping,
}

impl fmt::Display for StyleRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StyleRelation::Coarser => "coarser",
            StyleRelation::Finer => "finer",
            StyleRelation::Overlapping => "overlapping",
        })
    }
}

/// `a` is coarser than `b` when its median log-area is larger and its median
/// log-count smaller, each by more than half the pooled (mean) IQR of that
/// axis.
pub fn compare_styles(a: &StyleSummary, b: &StyleSummary) -> Result<StyleRelation> {
    if a.lesion != b.lesion {
        return Err(Error::Comparison(format!(
            "cannot compare {} with {}",
            a.lesion, b.lesion
        )));
    }
    let (Some(sa), Some(sb)) = (a.spread, b.spread) else {
        return Err(Error::Comparison("cannot compare an empty summary".into()));
    };
    let half_area = (sa.iqr_log_area + sb.iqr_log_area) / 4.0;
    let half_count = (sa.iqr_log_count + sb.iqr_log_count) / 4.0;
    let d_area = sa.median_log_area - sb.median_log_area;
    let d_count = sa.median_log_count - sb.median_log_count;
    Ok(if d_area > half_area && -d_count > half_count {
        StyleRelation::Coarser
    } else if -d_area > half_area && d_count > half_count {
        StyleRelation::Finer
    } else {
        StyleRelation::Overlapping
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QualityGrade {
    Good,
    Usable,
    Reject,
}

impl FromStr for QualityGrade {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "good" => Ok(QualityGrade::Good),
            "usable" => Ok(QualityGrade::Usable),
            "reject" => Ok(QualityGrade::Reject),
            _ => Err(Error::Parse(format!("unknown quality grade `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityDistribution {
    pub dataset_id: String,
    pub n_images: usize,
    pub good: f64,
    pub usable: f64,
    pub reject: f64,
}

#[derive(Debug, Deserialize)]
struct GradeRow {
    image_id: String,
    grade: String,
}

/// Normalized grade fractions from a CSV with `image_id,grade` columns.
pub fn quality_distribution(dataset_id: &str, grades: impl Read) -> Result<QualityDistribution> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(grades);
    let mut seen = BTreeSet::new();
    let mut tally = [0usize; 3];
    for row in reader.deserialize::<GradeRow>() {
        let row = row.map_err(|e| Error::Parse(format!("grades csv: {e}")))?;
        if !seen.insert(row.image_id.clone()) {
            return Err(Error::Validation(format!("image `{}` graded twice", row.image_id)));
        }
        tally[row.grade.parse::<QualityGrade>()? as usize] += 1;
    }
    let n = seen.len();
    if n == 0 {
        return Err(Error::EmptyContent("grades file has no rows".into()));
    }
    let frac = |k: usize| tally[k] as f64 / n as f64;
    Ok(QualityDistribution {
        dataset_id: dataset_id.to_string(),
        n_images: n,
        good: frac(QualityGrade::Good as usize),
        usable: frac(QualityGrade::Usable as usize),
        reject: frac(QualityGrade::Reject as usize),
    })
}

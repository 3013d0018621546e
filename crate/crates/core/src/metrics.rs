//! Dice, 11-threshold binned AUPR, per-dataset aggregation and replicate
//! spread.
//!
//! Every score is a function of integer confusion counts, so results do not
//! depend on evaluation order or on how images are split across threads.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{LesionCode, LesionMask, ProbabilityMap};

/// Binarization thresholds `k / 10` for `k = 0..=10`.
pub const AUPR_THRESHOLDS: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Threshold used when Dice is computed on a probability map.
pub const DEFAULT_DICE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `2 tp / (2 tp + fp + fn)`; 1.0 when both masks are empty.
    pub fn dice(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }

    /// Both prediction and truth empty.
    pub fn dice_degenerate(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }

    /// 1.0 when nothing is predicted positive.
    pub fn precision(&self) -> f64 {
        let denom = self.tp + self.fp;
        if denom == 0 {
            1.0
        } else {
            self.tp as f64 / denom as f64
        }
    }

    /// 0.0 when the ground truth is empty.
    pub fn recall(&self) -> f64 {
        let denom = self.tp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            self.tp as f64 / denom as f64
        }
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

fn check_same_dims(aw: usize, ah: usize, bw: usize, bh: usize) -> Result<()> {
    if (aw, ah) != (bw, bh) {
        return Err(Error::Shape(format!("{aw}x{ah} vs {bw}x{bh}")));
    }
    Ok(())
}

/// Pixel-wise confusion counts of `prediction` against `truth`.
pub fn confusion(prediction: &LesionMask, truth: &LesionMask) -> Result<ConfusionCounts> {
    check_same_dims(prediction.width(), prediction.height(), truth.width(), truth.height())?;
    let mut c = ConfusionCounts::default();
    for (&p, &t) in prediction.bits().iter().zip(truth.bits()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Dice overlap `2|X ∩ Y| / (|X| + |Y|)`; symmetric in its arguments.
pub fn dice(x: &LesionMask, y: &LesionMask) -> Result<f64> {
    Ok(confusion(x, y)?.dice())
}

/// Lesion wherever `p > threshold` (strict).
pub fn binarize(p: &ProbabilityMap, threshold: f64) -> Result<LesionMask> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Validation(format!("threshold {threshold} outside [0, 1]")));
    }
    LesionMask::new(
        p.image_id.clone(),
        p.lesion,
        p.width(),
        p.height(),
        p.probs().iter().map(|&v| v > threshold).collect(),
    )
}

/// Confusion counts at each of the 11 AUPR thresholds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ThresholdCounts(pub [ConfusionCounts; 11]);

impl std::ops::Add for ThresholdCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        let mut out = self.0;
        for (a, b) in out.iter_mut().zip(o.0) {
            *a = *a + b;
        }
        Self(out)
    }
}

impl std::iter::Sum for ThresholdCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

impl ThresholdCounts {
    /// One pass over the pixels: each pixel is bucketed by how many
    /// thresholds it exceeds, then counts are accumulated per threshold.
    pub fn compute(p: &ProbabilityMap, truth: &LesionMask) -> Result<Self> {
        check_same_dims(p.width(), p.height(), truth.width(), truth.height())?;
        let mut pos = [0u64; 12];
        let mut neg = [0u64; 12];
        for (&v, &t) in p.probs().iter().zip(truth.bits()) {
            let exceeded = AUPR_THRESHOLDS.iter().take_while(|&&tau| v > tau).count();
            if t {
                pos[exceeded] += 1;
            } else {
                neg[exceeded] += 1;
            }
        }
        let total_pos: u64 = pos.iter().sum();
        let total_neg: u64 = neg.iter().sum();
        let mut out = [ConfusionCounts::default(); 11];
        // A pixel exceeding `e` thresholds is positive at thresholds 0..e.
        let (mut tp, mut fp) = (0u64, 0u64);
        for k in (0..11).rev() {
            tp += pos[k + 1];
            fp += neg[k + 1];
            out[k] = ConfusionCounts {
                tp,
                fp,
                fn_: total_pos - tp,
                tn: total_neg - fp,
            };
        }
        Ok(Self(out))
    }

    pub fn has_positives(&self) -> bool {
        let c = self.0[0];
        c.tp + c.fn_ > 0
    }

    pub fn curve(&self) -> Vec<PRPoint> {
        // Recall never increases with the threshold, so walking from the
        // highest threshold down yields points sorted by ascending recall.
        AUPR_THRESHOLDS
            .iter()
            .zip(self.0.iter())
            .rev()
            .map(|(&threshold, c)| PRPoint {
                threshold,
                precision: c.precision(),
                recall: c.recall(),
            })
            .collect()
    }

    pub fn aupr(&self) -> AuprResult {
        let curve = self.curve();
        AuprResult {
            value: trapezoid_area(&curve),
            degenerate: !self.has_positives(),
            curve,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuprResult {
    pub value: f64,
    /// Points sorted by ascending recall.
    pub curve: Vec<PRPoint>,
    /// Empty ground truth; excluded from dataset aggregates.
    pub degenerate: bool,
}

/// Trapezoidal area under a recall-sorted precision/recall polyline,
/// prepending `(recall 0, precision of the first point)` when the curve
/// does not start at recall 0.
fn trapezoid_area(sorted: &[PRPoint]) -> f64 {
    let Some(first) = sorted.first() else {
        return 0.0;
    };
    let mut area = 0.0;
    let (mut r0, mut p0) = (0.0, first.precision);
    for pt in sorted {
        area += (pt.recall - r0) * (pt.precision + p0) / 2.0;
        r0 = pt.recall;
        p0 = pt.precision;
    }
    area
}

/// Area under the precision-recall curve sampled at the 11 thresholds.
pub fn binned_aupr(p: &ProbabilityMap, truth: &LesionMask) -> Result<AuprResult> {
    Ok(ThresholdCounts::compute(p, truth)?.aupr())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Dice,
    Aupr,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Dice => "dice",
            MetricKind::Aupr => "aupr",
        })
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dice" => Ok(MetricKind::Dice),
            "aupr" => Ok(MetricKind::Aupr),
            other => Err(Error::Parse(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Metric on confusion counts pooled over all images.
    #[default]
    Micro,
    /// Unweighted mean of per-image metrics.
    Macro,
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "micro" => Ok(Aggregation::Micro),
            "macro" => Ok(Aggregation::Macro),
            other => Err(Error::Parse(format!("unknown aggregation `{other}`"))),
        }
    }
}

/// A prediction to score: either already binary or a probability map.
#[derive(Debug, Clone, Copy)]
pub enum Prediction<'a> {
    Mask(&'a LesionMask),
    Probability(&'a ProbabilityMap),
}

impl Prediction<'_> {
    fn lesion(&self) -> LesionCode {
        match self {
            Prediction::Mask(m) => m.lesion,
            Prediction::Probability(p) => p.lesion,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetScore {
    pub value: f64,
    pub n_images: usize,
    /// Images whose per-image score is undefined by convention (both masks
    /// empty for Dice, empty ground truth for AUPR).
    pub degenerate_images: usize,
}

/// Scores a whole test set for one lesion type.
///
/// Macro averaging skips degenerate images unless every image is
/// degenerate, in which case the plain mean of the conventional values is
/// returned.
pub fn dataset_metric(
    pairs: &[(Prediction<'_>, &LesionMask)],
    metric: MetricKind,
    aggregation: Aggregation,
    dice_threshold: f64,
) -> Result<DatasetScore> {
    let (_, first_truth) = pairs
        .first()
        .ok_or_else(|| Error::Arity("dataset metric needs at least one image".into()))?;
    let lesion = first_truth.lesion;
    for (pred, truth) in pairs {
        if truth.lesion != lesion || pred.lesion() != lesion {
            return Err(Error::Consistency(format!(
                "mixed lesion codes: {lesion} vs {}/{}",
                pred.lesion(),
                truth.lesion
            )));
        }
    }

    match metric {
        MetricKind::Dice => {
            let counts: Vec<ConfusionCounts> = pairs
                .par_iter()
                .map(|(pred, truth)| match pred {
                    Prediction::Mask(m) => confusion(m, truth),
                    Prediction::Probability(p) => confusion(&binarize(p, dice_threshold)?, truth),
                })
                .collect::<Result<_>>()?;
            let degenerate = counts.iter().filter(|c| c.dice_degenerate()).count();
            let value = match aggregation {
                Aggregation::Micro => counts.iter().copied().sum::<ConfusionCounts>().dice(),
                Aggregation::Macro => macro_mean(counts.iter().map(|c| (c.dice(), c.dice_degenerate()))),
            };
            Ok(DatasetScore {
                value,
                n_images: pairs.len(),
                degenerate_images: degenerate,
            })
        }
        MetricKind::Aupr => {
            let counts: Vec<ThresholdCounts> = pairs
                .par_iter()
                .map(|(pred, truth)| match pred {
                    Prediction::Mask(m) => ThresholdCounts::compute(&ProbabilityMap::from_mask(m), truth),
                    Prediction::Probability(p) => ThresholdCounts::compute(p, truth),
                })
                .collect::<Result<_>>()?;
            let degenerate = counts.iter().filter(|c| !c.has_positives()).count();
            let value = match aggregation {
                Aggregation::Micro => counts.iter().copied().sum::<ThresholdCounts>().aupr().value,
                Aggregation::Macro => macro_mean(counts.iter().map(|c| {
                    let r = c.aupr();
                    (r.value, r.degenerate)
                })),
            };
            Ok(DatasetScore {
                value,
                n_images: pairs.len(),
                degenerate_images: degenerate,
            })
        }
    }
}

fn macro_mean(values: impl Iterator<Item = (f64, bool)>) -> f64 {
    let all: Vec<(f64, bool)> = values.collect();
    let kept: Vec<f64> = all.iter().filter(|(_, d)| !d).map(|(v, _)| *v).collect();
    if kept.is_empty() {
        all.iter().map(|(v, _)| v).sum::<f64>() / all.len() as f64
    } else {
        kept.iter().sum::<f64>() / kept.len() as f64
    }
}

/// One score for one (training combination, test set, lesion, replicate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub combination_id: String,
    pub test_dataset: String,
    pub lesion: LesionCode,
    pub replicate_seed: u64,
    pub metric: MetricKind,
    pub value: f64,
    #[serde(default)]
    pub n_images: usize,
    #[serde(default)]
    pub degenerate_images: usize,
}

impl MetricRecord {
    pub fn new(
        combination_id: impl Into<String>,
        test_dataset: impl Into<String>,
        lesion: LesionCode,
        replicate_seed: u64,
        metric: MetricKind,
        value: f64,
    ) -> Self {
        Self {
            combination_id: combination_id.into(),
            test_dataset: test_dataset.into(),
            lesion,
            replicate_seed,
            metric,
            value,
            n_images: 0,
            degenerate_images: 0,
        }
    }

    pub fn group_key(&self) -> GroupKey {
        GroupKey {
            combination_id: self.combination_id.clone(),
            test_dataset: self.test_dataset.clone(),
            lesion: self.lesion,
            metric: self.metric,
        }
    }
}

/// Writes records as CSV with one header row, in the given order.
pub fn write_metric_records<W: std::io::Write>(out: W, records: &[MetricRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record([
            "combination_id",
            "test_dataset",
            "lesion",
            "replicate_seed",
            "metric",
            "value",
            "n_images",
            "degenerate_images",
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_metric_records<R: std::io::Read>(input: R) -> Result<Vec<MetricRecord>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e: csv::Error| Error::Parse(format!("metric records: {e}"))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub combination_id: String,
    pub test_dataset: String,
    pub lesion: LesionCode,
    pub metric: MetricKind,
}

/// Spread of one cell over its replicates. `stddev` is the population
/// standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub stddev: f64,
}

impl ReplicateSummary {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Arity("cannot summarize an empty group".into()));
        }
        let n = values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // Shifting by the first value keeps a constant group exact.
        let shift = values[0];
        let mean = (shift + values.iter().map(|v| v - shift).sum::<f64>() / n).clamp(min, max);
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(Self {
            n: values.len(),
            mean,
            min,
            max,
            stddev: var.sqrt(),
        })
    }
}

/// Summary of records that must all belong to the same cell.
pub fn summarize_group(records: &[MetricRecord]) -> Result<ReplicateSummary> {
    let first = records
        .first()
        .ok_or_else(|| Error::Arity("cannot summarize an empty group".into()))?;
    let key = first.group_key();
    if let Some(other) = records.iter().find(|r| r.group_key() != key) {
        return Err(Error::Consistency(format!(
            "group mixes {key:?} with {:?}",
            other.group_key()
        )));
    }
    let values: Vec<f64> = records.iter().map(|r| r.value).collect();
    ReplicateSummary::from_values(&values)
}

/// Groups records by (combination, test set, lesion, metric) and summarizes
/// each group over its replicates.
pub fn aggregate_replicates(records: &[MetricRecord]) -> Result<BTreeMap<GroupKey, ReplicateSummary>> {
    let mut groups: BTreeMap<GroupKey, Vec<f64>> = BTreeMap::new();
    for r in records {
        if !(0.0..=1.0).contains(&r.value) {
            return Err(Error::Validation(format!("metric value {} outside [0, 1]", r.value)));
        }
        groups.entry(r.group_key()).or_default().push(r.value);
    }
    groups
        .into_iter()
        .map(|(k, v)| Ok((k, ReplicateSummary::from_values(&v)?)))
        .collect()
}

/// Mean over test sets of per-cell replicate means, per (combination,
/// lesion, metric).
pub fn mean_over_test_sets(
    summaries: &BTreeMap<GroupKey, ReplicateSummary>,
) -> BTreeMap<(String, LesionCode, MetricKind), f64> {
    let mut acc: BTreeMap<(String, LesionCode, MetricKind), (f64, usize)> = BTreeMap::new();
    for (k, s) in summaries {
        let e = acc.entry((k.combination_id.clone(), k.lesion, k.metric)).or_default();
        e.0 += s.mean;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (sum, n))| (k, sum / n as f64)).collect()
}

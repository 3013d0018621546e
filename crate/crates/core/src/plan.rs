//! Dataset manifests, train/val/test splits, and the enumeration of every
//! non-empty combination of training sets (2^D - 1 for D datasets),
//! optionally with some datasets held out for leave-one-out evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::LesionCode;
use crate::rng::SplitMix64;

pub const DEFAULT_TEST_RATIO: f64 = 0.30;
pub const DEFAULT_VAL_RATIO: f64 = 0.15;

/// Annotation granularity of a dataset, or of a combination of datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StyleTag {
    Fine,
    Mixed,
    Coarse,
}

impl StyleTag {
    /// Coarse if every member is coarse, fine if every member is fine,
    /// mixed otherwise.
    pub fn combine(tags: impl IntoIterator<Item = StyleTag>) -> Option<StyleTag> {
        let set: BTreeSet<StyleTag> = tags.into_iter().collect();
        match set.len() {
            0 => None,
            1 => set.into_iter().next(),
            _ => Some(StyleTag::Mixed),
        }
    }
}

impl fmt::Display for StyleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StyleTag::Fine => "fine",
            StyleTag::Mixed => "mixed",
            StyleTag::Coarse => "coarse",
        })
    }
}

impl FromStr for StyleTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fine" => Ok(StyleTag::Fine),
            "mixed" => Ok(StyleTag::Mixed),
            "coarse" => Ok(StyleTag::Coarse),
            other => Err(Error::Parse(format!("unknown style `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Val,
    Test,
}

pub type SplitAssignment = BTreeMap<String, Subset>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SplitSpec {
    /// Published split, one entry per image.
    Provided { assignment: SplitAssignment },
    /// Seeded split; ratios default to 30% test and 15% of the rest for val.
    Generated {
        seed: u64,
        #[serde(default = "default_test_ratio")]
        test_ratio: f64,
        #[serde(default = "default_val_ratio")]
        val_ratio: f64,
    },
}

fn default_test_ratio() -> f64 {
    DEFAULT_TEST_RATIO
}

fn default_val_ratio() -> f64 {
    DEFAULT_VAL_RATIO
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub masks: BTreeMap<LesionCode, PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub predictions: BTreeMap<LesionCode, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub id: String,
    pub style: StyleTag,
    pub lesions: Vec<LesionCode>,
    /// Common evaluation resolution, when every raster shares one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<(usize, usize)>,
    pub images: Vec<ImageRecord>,
    pub split: SplitSpec,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Validation("dataset id must be non-empty".into()));
        }
        let mut ids = BTreeSet::new();
        for img in &self.images {
            if !ids.insert(img.image_id.as_str()) {
                return Err(Error::Validation(format!(
                    "dataset `{}` lists image `{}` twice",
                    self.id, img.image_id
                )));
            }
        }
        match &self.split {
            SplitSpec::Provided { assignment } => {
                let assigned: BTreeSet<&str> = assignment.keys().map(String::as_str).collect();
                if assigned != ids {
                    let missing: Vec<_> = ids.difference(&assigned).take(5).collect();
                    let extra: Vec<_> = assigned.difference(&ids).take(5).collect();
                    return Err(Error::Validation(format!(
                        "split of `{}` does not cover its images exactly (unassigned {missing:?}, unknown {extra:?})",
                        self.id
                    )));
                }
            }
            SplitSpec::Generated {
                test_ratio, val_ratio, ..
            } => {
                if !(0.0..1.0).contains(test_ratio) || !(0.0..1.0).contains(val_ratio) {
                    return Err(Error::Validation(format!(
                        "split ratios of `{}` must lie in [0, 1)",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Self =
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// The provided split, or the generated one for the stored seed/ratios.
    pub fn resolve_split(&self) -> Result<SplitAssignment> {
        match &self.split {
            SplitSpec::Provided { assignment } => Ok(assignment.clone()),
            SplitSpec::Generated {
                seed,
                test_ratio,
                val_ratio,
            } => generate_split(self, *seed, *test_ratio, *val_ratio),
        }
    }
}

fn round_half_up(x: f64) -> usize {
    // The nudge keeps decimal halves such as 0.15 * 10 = 1.5 rounding up
    // despite binary representation error.
    (x + 0.5 + 1e-9).floor() as usize
}

/// Sizes of (train, val, test) for `n` images.
pub fn split_sizes(n: usize, test_ratio: f64, val_ratio: f64) -> (usize, usize, usize) {
    let test = round_half_up(test_ratio * n as f64).min(n);
    let val = round_half_up(val_ratio * (n - test) as f64).min(n - test);
    (n - test - val, val, test)
}

/// Seeded split of a manifest's images. Provided splits pass through
/// unchanged.
///
/// Image ids are sorted, shuffled with SplitMix64(seed), and the first
/// `test` ids go to test, the next `val` to val and the rest to train.
pub fn generate_split(
    manifest: &DatasetManifest,
    seed: u64,
    test_ratio: f64,
    val_ratio: f64,
) -> Result<SplitAssignment> {
    if let SplitSpec::Provided { assignment } = &manifest.split {
        return Ok(assignment.clone());
    }
    let mut ids: Vec<&str> = manifest.images.iter().map(|i| i.image_id.as_str()).collect();
    split_ids(&mut ids, seed, test_ratio, val_ratio)
}

/// Split of bare ids; see [`generate_split`].
pub fn split_ids(ids: &mut [&str], seed: u64, test_ratio: f64, val_ratio: f64) -> Result<SplitAssignment> {
    let n = ids.len();
    if n < 3 {
        return Err(Error::Size(format!(
            "a generated split needs at least 3 images, got {n}"
        )));
    }
    if !(0.0..1.0).contains(&test_ratio) || !(0.0..1.0).contains(&val_ratio) {
        return Err(Error::Validation("split ratios must lie in [0, 1)".into()));
    }
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Validation("image ids must be unique".into()));
    }
    SplitMix64::new(seed).shuffle(ids);
    let (_, val, test) = split_sizes(n, test_ratio, val_ratio);
    Ok(ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let subset = if i < test {
                Subset::Test
            } else if i < test + val {
                Subset::Val
            } else {
                Subset::Train
            };
            (id.to_string(), subset)
        })
        .collect())
}

pub fn subset_count(split: &SplitAssignment, subset: Subset) -> usize {
    split.values().filter(|&&s| s == subset).count()
}

/// The parts of a dataset that planning needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub id: String,
    pub style: StyleTag,
    pub train_images: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComboSpec {
    /// Sorted member ids joined by `+`.
    pub combination_id: String,
    pub members: Vec<String>,
    pub total_training_images: usize,
    /// Member styles, in member order.
    pub member_styles: Vec<StyleTag>,
    pub style: StyleTag,
}

impl ComboSpec {
    pub fn contains(&self, dataset: &str) -> bool {
        self.members.iter().any(|m| m == dataset)
    }
}

pub fn combination_id<S: AsRef<str>>(members: &[S]) -> String {
    let mut ids: Vec<&str> = members.iter().map(AsRef::as_ref).collect();
    ids.sort_unstable();
    ids.join("+")
}

/// Every non-empty subset of the datasets not in `held_out`, ordered by
/// (total training images, combination id).
pub fn enumerate_combinations(datasets: &[DatasetSummary], held_out: &BTreeSet<String>) -> Result<Vec<ComboSpec>> {
    let mut seen = BTreeSet::new();
    for d in datasets {
        if !seen.insert(d.id.as_str()) {
            return Err(Error::Validation(format!("dataset `{}` listed twice", d.id)));
        }
        if d.id.contains('+') {
            return Err(Error::Validation(format!("dataset id `{}` must not contain `+`", d.id)));
        }
    }
    if let Some(unknown) = held_out.iter().find(|h| !seen.contains(h.as_str())) {
        return Err(Error::Validation(format!(
            "held-out dataset `{unknown}` is not in the plan"
        )));
    }
    let mut remaining: Vec<&DatasetSummary> = datasets.iter().filter(|d| !held_out.contains(&d.id)).collect();
    remaining.sort_by(|a, b| a.id.cmp(&b.id));
    if remaining.is_empty() {
        return Err(Error::Arity("no datasets left after removing held-out ones".into()));
    }
    if remaining.len() > 20 {
        return Err(Error::Arity(format!(
            "{} datasets would give {} combinations",
            remaining.len(),
            (1u64 << remaining.len()) - 1
        )));
    }

    let mut combos: Vec<ComboSpec> = (1u32..(1 << remaining.len()))
        .map(|bits| {
            let members: Vec<&DatasetSummary> = remaining
                .iter()
                .enumerate()
                .filter(|(i, _)| bits & (1 << i) != 0)
                .map(|(_, d)| *d)
                .collect();
            let member_styles: Vec<StyleTag> = members.iter().map(|d| d.style).collect();
            ComboSpec {
                combination_id: members.iter().map(|d| d.id.as_str()).collect::<Vec<_>>().join("+"),
                members: members.iter().map(|d| d.id.clone()).collect(),
                total_training_images: members.iter().map(|d| d.train_images).sum(),
                style: StyleTag::combine(member_styles.iter().copied()).expect("non-empty"),
                member_styles,
            }
        })
        .collect();
    combos.sort_by(|a, b| {
        (a.total_training_images, &a.combination_id).cmp(&(b.total_training_images, &b.combination_id))
    });
    Ok(combos)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedDataset {
    pub id: String,
    pub style: StyleTag,
    pub lesions: Vec<LesionCode>,
    pub n_images: usize,
    pub train_images: usize,
    pub val_images: usize,
    pub test_images: usize,
    pub split: SplitAssignment,
}

impl PlannedDataset {
    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            id: self.id.clone(),
            style: self.style,
            train_images: self.train_images,
        }
    }
}

/// Everything external training needs: splits, the combinations to train
/// on, and the replicate seeds for each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub datasets: Vec<PlannedDataset>,
    pub held_out: BTreeSet<String>,
    pub replicate_seeds: Vec<u64>,
    pub combinations: Vec<ComboSpec>,
}

impl ExperimentPlan {
    pub fn build(manifests: &[DatasetManifest], held_out: BTreeSet<String>, replicate_seeds: Vec<u64>) -> Result<Self> {
        let mut datasets = Vec::with_capacity(manifests.len());
        for m in manifests {
            m.validate()?;
            let split = m.resolve_split()?;
            datasets.push(PlannedDataset {
                id: m.id.clone(),
                style: m.style,
                lesions: m.lesions.clone(),
                n_images: m.images.len(),
                train_images: subset_count(&split, Subset::Train),
                val_images: subset_count(&split, Subset::Val),
                test_images: subset_count(&split, Subset::Test),
                split,
            });
        }
        datasets.sort_by(|a, b| a.id.cmp(&b.id));
        Self::from_datasets(datasets, held_out, replicate_seeds)
    }

    pub fn from_datasets(
        datasets: Vec<PlannedDataset>,
        held_out: BTreeSet<String>,
        replicate_seeds: Vec<u64>,
    ) -> Result<Self> {
        let summaries: Vec<DatasetSummary> = datasets.iter().map(PlannedDataset::summary).collect();
        let combinations = enumerate_combinations(&summaries, &held_out)?;
        let mut seeds = replicate_seeds;
        seeds.sort_unstable();
        seeds.dedup();
        Ok(Self {
            datasets,
            held_out,
            replicate_seeds: seeds,
            combinations,
        })
    }

    pub fn dataset(&self, id: &str) -> Option<&PlannedDataset> {
        self.datasets.iter().find(|d| d.id == id)
    }

    pub fn combination(&self, id: &str) -> Option<&ComboSpec> {
        self.combinations.iter().find(|c| c.combination_id == id)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

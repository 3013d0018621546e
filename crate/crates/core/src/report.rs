//! Leave-one-out scenario tables and generalization-strategy comparisons
//! built by joining metric records against an experiment plan.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{MetricKind, MetricRecord, ReplicateSummary};
use crate::plan::{ExperimentPlan, StyleTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowMark {
    /// Highest mean in the table.
    Best,
    /// Lowest mean in the table.
    Worst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub combination_id: String,
    pub total_training_images: usize,
    pub style: StyleTag,
    /// Spread over replicates of the per-replicate mean across lesions.
    /// `None` for a missing cell.
    pub summary: Option<ReplicateSummary>,
    pub mark: Option<RowMark>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub test_dataset: String,
    pub metric: MetricKind,
    pub rows: Vec<ScenarioRow>,
    pub missing: Vec<String>,
}

impl ScenarioReport {
    pub fn best(&self) -> Option<&ScenarioRow> {
        self.rows.iter().find(|r| r.mark == Some(RowMark::Best))
    }

    pub fn worst(&self) -> Option<&ScenarioRow> {
        self.rows.iter().find(|r| r.mark == Some(RowMark::Worst))
    }

    pub fn row(&self, combination_id: &str) -> Option<&ScenarioRow> {
        self.rows.iter().find(|r| r.combination_id == combination_id)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "test_dataset",
            "combination_id",
            "total_training_images",
            "style",
            "n_replicates",
            "mean",
            "min",
            "max",
            "stddev",
            "mark",
        ])?;
        for r in &self.rows {
            let (n, mean, min, max, sd) = match &r.summary {
                Some(s) => (
                    s.n.to_string(),
                    fmt_value(s.mean),
                    fmt_value(s.min),
                    fmt_value(s.max),
                    fmt_value(s.stddev),
                ),
                None => ("0".into(), String::new(), String::new(), String::new(), String::new()),
            };
            let mark = match r.mark {
                Some(RowMark::Best) => "*",
                Some(RowMark::Worst) => ".",
                None if r.summary.is_none() => "missing",
                None => "",
            };
            w.write_record([
                self.test_dataset.as_str(),
                &r.combination_id,
                &r.total_training_images.to_string(),
                &r.style.to_string(),
                &n,
                &mean,
                &min,
                &max,
                &sd,
                mark,
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Fixed six-decimal rendering used in every report.
pub fn fmt_value(v: f64) -> String {
    format!("{v:.6}")
}

/// Table for one held-out test set: every planned combination that does
/// not train on it, ordered by training-set size, with best and worst rows
/// marked.
///
/// When several lesions are present, each replicate's value is the mean
/// over lesions before the spread across replicates is taken. Missing cells
/// are a join error unless `allow_missing` is set, in which case they are
/// kept as unmarked rows without a summary.
pub fn scenario_table(
    plan: &ExperimentPlan,
    test_dataset: &str,
    metric: MetricKind,
    records: &[MetricRecord],
    allow_missing: bool,
) -> Result<ScenarioReport> {
    if plan.dataset(test_dataset).is_none() {
        return Err(Error::Join(format!("test dataset `{test_dataset}` is not in the plan")));
    }
    let relevant: Vec<&MetricRecord> = records
        .iter()
        .filter(|r| r.test_dataset == test_dataset && r.metric == metric)
        .collect();

    let planned: BTreeSet<&str> = plan
        .combinations
        .iter()
        .filter(|c| !c.contains(test_dataset))
        .map(|c| c.combination_id.as_str())
        .collect();
    let unknown: BTreeSet<&str> = relevant
        .iter()
        .map(|r| r.combination_id.as_str())
        .filter(|c| !planned.contains(c))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Join(format!(
            "records for combinations not in the plan (or training on `{test_dataset}`): {}",
            unknown.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }

    // combination -> replicate -> lesion values
    let mut cells: BTreeMap<&str, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in &relevant {
        cells
            .entry(r.combination_id.as_str())
            .or_default()
            .entry(r.replicate_seed)
            .or_default()
            .push(r.value);
    }

    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for combo in plan.combinations.iter().filter(|c| !c.contains(test_dataset)) {
        let summary = match cells.get(combo.combination_id.as_str()) {
            Some(reps) => {
                let per_rep: Vec<f64> = reps.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
                Some(ReplicateSummary::from_values(&per_rep)?)
            }
            None => {
                missing.push(combo.combination_id.clone());
                None
            }
        };
        rows.push(ScenarioRow {
            combination_id: combo.combination_id.clone(),
            total_training_images: combo.total_training_images,
            style: combo.style,
            summary,
            mark: None,
        });
    }
    if !missing.is_empty() && !allow_missing {
        return Err(Error::Join(format!(
            "missing cells for test set `{test_dataset}`: {}",
            missing.join(", ")
        )));
    }

    let scored: Vec<(usize, f64)> = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.summary.map(|s| (i, s.mean)))
        .collect();
    if scored.len() > 1 {
        // First row wins ties in either direction.
        let best = scored
            .iter()
            .fold(scored[0], |acc, &x| if x.1 > acc.1 { x } else { acc });
        let worst = scored
            .iter()
            .fold(scored[0], |acc, &x| if x.1 < acc.1 { x } else { acc });
        if best.0 != worst.0 {
            rows[best.0].mark = Some(RowMark::Best);
            rows[worst.0].mark = Some(RowMark::Worst);
        }
    }

    Ok(ScenarioReport {
        test_dataset: test_dataset.to_string(),
        metric,
        rows,
        missing,
    })
}

/// How a model (or prediction) was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Baseline,
    Ensemble,
    SwaEncoder,
    SwaDecoder,
    SwaFull,
    SoupEncoder,
    SoupDecoder,
    SoupFull,
}

impl Strategy {
    pub const ALL: [Strategy; 8] = [
        Strategy::Baseline,
        Strategy::Ensemble,
        Strategy::SwaEncoder,
        Strategy::SwaDecoder,
        Strategy::SwaFull,
        Strategy::SoupEncoder,
        Strategy::SoupDecoder,
        Strategy::SoupFull,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::Ensemble => "ensemble",
            Strategy::SwaEncoder => "swa_encoder",
            Strategy::SwaDecoder => "swa_decoder",
            Strategy::SwaFull => "swa_full",
            Strategy::SoupEncoder => "soup_encoder",
            Strategy::SoupDecoder => "soup_decoder",
            Strategy::SoupFull => "soup_full",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub combination_id: String,
    /// Mean over test sets of each strategy's per-test-set mean.
    pub scores: BTreeMap<Strategy, f64>,
    /// Strategies scoring strictly above the baseline.
    pub beats_baseline: Vec<Strategy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub metric: MetricKind,
    pub strategies: Vec<Strategy>,
    pub rows: Vec<StrategyRow>,
    /// Number of combinations on which each non-baseline strategy wins.
    pub win_counts: BTreeMap<Strategy, usize>,
}

impl StrategyReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["combination_id".to_string()];
        header.extend(self.strategies.iter().map(|s| s.to_string()));
        header.push("beats_baseline".into());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.combination_id.clone()];
            rec.extend(self.strategies.iter().map(|s| fmt_value(row.scores[s])));
            rec.push(
                row.beats_baseline
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(";"),
            );
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn per_combination_scores(records: &[MetricRecord], metric: MetricKind) -> BTreeMap<String, f64> {
    // combination -> test set -> values
    let mut acc: BTreeMap<&str, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.metric == metric) {
        acc.entry(&r.combination_id)
            .or_default()
            .entry(&r.test_dataset)
            .or_default()
            .push(r.value);
    }
    acc.into_iter()
        .map(|(combo, tests)| {
            let means: Vec<f64> = tests.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
            (combo.to_string(), means.iter().sum::<f64>() / means.len() as f64)
        })
        .collect()
}

/// Per-combination comparison of strategies against the baseline.
pub fn strategy_comparison(
    records: &BTreeMap<Strategy, Vec<MetricRecord>>,
    metric: MetricKind,
) -> Result<StrategyReport> {
    if !records.contains_key(&Strategy::Baseline) {
        return Err(Error::Join("strategy comparison needs baseline records".into()));
    }
    let scores: BTreeMap<Strategy, BTreeMap<String, f64>> = records
        .iter()
        .map(|(s, recs)| (*s, per_combination_scores(recs, metric)))
        .collect();
    let baseline_combos: BTreeSet<&String> = scores[&Strategy::Baseline].keys().collect();
    if baseline_combos.is_empty() {
        return Err(Error::Join(format!("baseline has no {metric} records")));
    }
    for (s, per) in &scores {
        let combos: BTreeSet<&String> = per.keys().collect();
        if combos != baseline_combos {
            let missing: Vec<&str> = baseline_combos.difference(&combos).map(|c| c.as_str()).collect();
            let extra: Vec<&str> = combos.difference(&baseline_combos).map(|c| c.as_str()).collect();
            return Err(Error::Join(format!(
                "strategy `{s}` covers different combinations than the baseline (missing [{}], extra [{}])",
                missing.join(", "),
                extra.join(", ")
            )));
        }
    }

    let strategies: Vec<Strategy> = scores.keys().copied().collect();
    let mut win_counts: BTreeMap<Strategy, usize> = strategies
        .iter()
        .filter(|s| **s != Strategy::Baseline)
        .map(|s| (*s, 0))
        .collect();
    let rows = baseline_combos
        .into_iter()
        .map(|combo| {
            let row_scores: BTreeMap<Strategy, f64> = scores.iter().map(|(s, per)| (*s, per[combo])).collect();
            let base = row_scores[&Strategy::Baseline];
            let beats: Vec<Strategy> = row_scores
                .iter()
                .filter(|(s, v)| **s != Strategy::Baseline && **v > base)
                .map(|(s, _)| *s)
                .collect();
            for s in &beats {
                *win_counts.get_mut(s).expect("known strategy") += 1;
            }
            StrategyRow {
                combination_id: combo.clone(),
                scores: row_scores,
                beats_baseline: beats,
            }
        })
        .collect();
    Ok(StrategyReport {
        metric,
        strategies,
        rows,
        win_counts,
    })
}

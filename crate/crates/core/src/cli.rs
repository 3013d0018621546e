//! Command-line front end. Every subcommand reads and writes plain files
//! (JSON configs, CSV tables, PNG rasters, tensor archives) so the whole
//! pipeline can be scripted: synth, characterize, plan, average/ensemble,
//! metrics, report.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use crate::archive::{read_archive, write_archive, AveragingMode, Scope};
use crate::averaging::{average_weights, AveragingRequest};
use crate::characterization::{
    lesion_stats_with, quality_distribution, style_summary, Connectivity, HistogramSpec, LesionStats,
};
use crate::ensemble::{ensemble_average, EnsembleMember, EnsembleSet};
use crate::error::{Error, ErrorClass, Result};
use crate::metrics::{
    dataset_metric, read_metric_records, write_metric_records, Aggregation, MetricKind, MetricRecord, Prediction,
    DEFAULT_DICE_THRESHOLD,
};
use crate::plan::{DatasetManifest, ExperimentPlan};
use crate::raster::{
    list_rasters, load_mask, load_probability_map, save_probability_map, LesionCode, LesionMask, ProbabilityMap,
    RasterKind,
};
use crate::report::{fmt_value, scenario_table, strategy_comparison, Strategy};
use crate::synth::{write_dataset, SynthDatasetConfig};

#[derive(Debug, Parser)]
#[command(
    name = "seg-genlab",
    version,
    about = "Cross-dataset lesion segmentation toolkit",
    propagate_version = true
)]
pub struct Cli {
    /// Worker threads for per-image and per-tensor work (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Write a provenance sidecar (<out>.meta.json) next to each output.
    #[arg(long, global = true)]
    pub meta: bool,
    /// More log output on stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset: masks, predictions and a manifest.
    Synth(SynthArgs),
    /// Per-image lesion statistics and the count/area histogram.
    Characterize(CharacterizeArgs),
    /// Distribution of image-quality grades.
    Quality(QualityArgs),
    /// Build an experiment plan from dataset manifests.
    Plan(PlanArgs),
    /// SWA or soup averaging of tensor archives.
    Average(AverageArgs),
    /// Per-pixel mean of probability maps from several models.
    Ensemble(EnsembleArgs),
    /// Score predictions against ground truth.
    Metrics(MetricsArgs),
    /// Scenario tables or strategy comparisons from metric records.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Dataset generator config (JSON).
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CharacterizeArgs {
    /// Directory of `<image_id>.<LESION>.png` masks.
    #[arg(long, value_name = "DIR")]
    pub masks: PathBuf,
    /// Lesion type to characterize.
    #[arg(long)]
    pub lesion: LesionCode,
    /// Per-image statistics CSV.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Histogram CSV (bin_log_area_lo, bin_log_count_lo, count).
    #[arg(long, value_name = "FILE")]
    pub hist: PathBuf,
    /// Style summary JSON (medians, IQRs, histogram).
    #[arg(long, value_name = "FILE")]
    pub summary: Option<PathBuf>,
    /// Dataset id recorded in the summary (default: the mask directory name).
    #[arg(long)]
    pub dataset_id: Option<String>,
    /// Pixel connectivity for lesion counting: 4 or 8.
    #[arg(long, default_value = "8")]
    pub connectivity: Connectivity,
}

#[derive(Debug, Args)]
pub struct QualityArgs {
    /// CSV with image_id,grade columns (grades: good, usable, reject).
    #[arg(long, value_name = "FILE")]
    pub grades: PathBuf,
    /// Output CSV.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Dataset id (default: the grades file stem).
    #[arg(long)]
    pub dataset_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Directory of dataset manifests (`*.json`, or `*/manifest.json`).
    #[arg(long, value_name = "DIR")]
    pub datasets: PathBuf,
    /// Output plan JSON.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Datasets excluded from training (comma separated).
    #[arg(long, value_delimiter = ',', value_name = "IDS")]
    pub hold_out: Vec<String>,
    /// Replicate seeds (comma separated; default 0..7).
    #[arg(long, value_delimiter = ',', value_name = "SEEDS")]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct AverageArgs {
    /// swa (one run, several iterations) or soup (several runs).
    #[arg(long)]
    pub mode: AveragingMode,
    /// Which tensors to average: encoder, decoder or full.
    #[arg(long)]
    pub scope: Scope,
    /// Archive supplying tensors outside the scope (default: first input).
    #[arg(long, value_name = "FILE")]
    pub base: Option<PathBuf>,
    /// Output archive.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Input archives.
    #[arg(required = true, value_name = "INPUTS")]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// Output directory for the averaged probability maps.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// One prediction directory per model; files are paired by name.
    #[arg(required = true, value_name = "DIRS")]
    pub dirs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Prediction directory (`*.prob.png`, or binary `*.png` masks).
    #[arg(long, value_name = "DIR")]
    pub pred: PathBuf,
    /// Ground-truth mask directory.
    #[arg(long, value_name = "DIR")]
    pub truth: PathBuf,
    /// Lesion types (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "EX,HE,MA,CWS")]
    pub lesions: Vec<LesionCode>,
    /// Metrics (comma separated): dice, aupr.
    #[arg(long, value_delimiter = ',', default_value = "dice,aupr")]
    pub metric: Vec<MetricKind>,
    /// micro (pooled counts) or macro (mean of per-image scores).
    #[arg(long, default_value = "micro")]
    pub agg: Aggregation,
    /// Binarization threshold for Dice on probability maps.
    #[arg(long, default_value_t = DEFAULT_DICE_THRESHOLD)]
    pub threshold: f64,
    /// Training combination recorded in each row.
    #[arg(long, default_value = "unknown")]
    pub combination: String,
    /// Test dataset recorded in each row (default: the truth directory name).
    #[arg(long)]
    pub test_dataset: Option<String>,
    /// Replicate seed recorded in each row.
    #[arg(long, default_value_t = 0)]
    pub replicate_seed: u64,
    /// Output CSV.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Leave-one-out table for this held-out test dataset.
    #[arg(
        long,
        value_name = "ID",
        conflicts_with = "strategies",
        required_unless_present = "strategies"
    )]
    pub scenario: Option<String>,
    /// Compare strategies; records are given as `strategy=path`.
    #[arg(long)]
    pub strategies: bool,
    /// Experiment plan (required with --scenario).
    #[arg(long, value_name = "FILE")]
    pub plan: Option<PathBuf>,
    /// Metric record CSVs (`strategy=path` with --strategies).
    #[arg(long, required = true, num_args = 1.., value_name = "FILES")]
    pub records: Vec<String>,
    /// Metric to report.
    #[arg(long, default_value = "dice")]
    pub metric: MetricKind,
    /// Keep missing cells as empty rows instead of failing.
    #[arg(long, conflicts_with = "strategies")]
    pub allow_missing: bool,
    /// Output CSV.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Also write the report as JSON.
    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
}

/// The full argument grammar, for help rendering and introspection.
pub fn command() -> clap::Command {
    Cli::command()
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 on success, 1 for usage and validation errors,
/// 2 for data-integrity errors.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();

    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", error_line(&e));
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Validation => 1,
        ErrorClass::Integrity => 2,
    }
}

/// One-line JSON diagnostic.
pub fn error_line(e: &Error) -> String {
    let class = match e.class() {
        ErrorClass::Validation => "validation",
        ErrorClass::Integrity => "integrity",
    };
    json!({ "error": e.kind(), "class": class, "message": e.to_string() }).to_string()
}

fn run(cli: &Cli) -> Result<serde_json::Value> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Error::Validation("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    let (summary, outputs) = pool.install(|| match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Characterize(a) => characterize(a),
        Command::Quality(a) => quality(a),
        Command::Plan(a) => plan(a),
        Command::Average(a) => average(a),
        Command::Ensemble(a) => ensemble(a),
        Command::Metrics(a) => metrics(a),
        Command::Report(a) => report(a),
    })?;
    if cli.meta {
        for out in &outputs {
            write_meta(out)?;
        }
    }
    Ok(summary)
}

type Outcome = Result<(serde_json::Value, Vec<PathBuf>)>;

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if !path.is_dir() {
        return Err(Error::Validation(format!(
            "{what} `{}` is not a directory",
            path.display()
        )));
    }
    Ok(())
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(Error::Validation(format!("{what} `{}` does not exist", path.display())));
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Default dataset id for a raster directory: its name, or the parent's
/// name for the `masks/` and `predictions/` folders written by `synth`.
fn dir_name(path: &Path) -> String {
    let Ok(full) = path.canonicalize() else {
        return path.display().to_string();
    };
    let name = |p: &Path| p.file_name().map(|n| n.to_string_lossy().into_owned());
    match name(&full).as_deref() {
        Some("masks") | Some("predictions") => full.parent().and_then(name),
        _ => name(&full),
    }
    .unwrap_or_else(|| path.display().to_string())
}

fn write_meta(out: &Path) -> Result<()> {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    let unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let args: Vec<String> = std::env::args().collect();
    let host = std::fs::read_to_string("/etc/hostname")
        .map(|h| h.trim().to_string())
        .unwrap_or_default();
    write_json(
        Path::new(&name),
        &json!({
            "tool": "seg-genlab",
            "version": env!("CARGO_PKG_VERSION"),
            "args": args,
            "created_unix": unix,
            "host": host,
        }),
    )
}

fn synth(a: &SynthArgs) -> Outcome {
    require_file(&a.config, "config")?;
    let config = SynthDatasetConfig::load(&a.config)?;
    let manifest = write_dataset(&config, &a.out)?;
    log::info!("wrote {} images to {}", manifest.images.len(), a.out.display());
    Ok((
        json!({ "dataset": manifest.id, "images": manifest.images.len(), "lesions": manifest.lesions }),
        vec![a.out.join("manifest.json")],
    ))
}

fn characterize(a: &CharacterizeArgs) -> Outcome {
    require_dir(&a.masks, "mask directory")?;
    let entries: Vec<_> = list_rasters(&a.masks, RasterKind::Mask)?
        .into_iter()
        .filter(|e| e.lesion == a.lesion)
        .collect();
    if entries.is_empty() {
        return Err(Error::EmptyContent(format!(
            "no {} masks in `{}`",
            a.lesion,
            a.masks.display()
        )));
    }
    let stats: Vec<LesionStats> = entries
        .par_iter()
        .map(|e| load_mask(&e.path).map(|m| lesion_stats_with(&m, a.connectivity)))
        .collect::<Result<_>>()?;
    let dataset_id = a.dataset_id.clone().unwrap_or_else(|| dir_name(&a.masks));
    let summary = style_summary(&dataset_id, &stats, HistogramSpec::default())?;

    let mut w = csv::Writer::from_writer(create(&a.out)?);
    for s in &stats {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| Error::io(&a.out, e))?;

    let mut h = csv::Writer::from_writer(create(&a.hist)?);
    h.write_record(["bin_log_area_lo", "bin_log_count_lo", "count"])?;
    for (area_lo, count_lo, n) in summary.histogram.cells() {
        h.write_record([fmt_value(area_lo), fmt_value(count_lo), n.to_string()])?;
    }
    h.flush().map_err(|e| Error::io(&a.hist, e))?;

    let mut outputs = vec![a.out.clone(), a.hist.clone()];
    if let Some(path) = &a.summary {
        write_json(path, &summary)?;
        outputs.push(path.clone());
    }
    Ok((
        json!({
            "dataset": dataset_id,
            "lesion": a.lesion,
            "images": summary.n_images,
            "contributing": summary.n_contributing,
            "spread": summary.spread,
        }),
        outputs,
    ))
}

fn quality(a: &QualityArgs) -> Outcome {
    require_file(&a.grades, "grades file")?;
    let dataset_id = a.dataset_id.clone().unwrap_or_else(|| {
        a.grades
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let file = File::open(&a.grades).map_err(|e| Error::io(&a.grades, e))?;
    let dist = quality_distribution(&dataset_id, BufReader::new(file))?;
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    w.write_record(["dataset_id", "n_images", "good", "usable", "reject"])?;
    w.write_record([
        dist.dataset_id.clone(),
        dist.n_images.to_string(),
        fmt_value(dist.good),
        fmt_value(dist.usable),
        fmt_value(dist.reject),
    ])?;
    w.flush().map_err(|e| Error::io(&a.out, e))?;
    Ok((serde_json::to_value(&dist)?, vec![a.out.clone()]))
}

/// Manifests found directly in `dir` (`*.json`) or one level down
/// (`*/manifest.json`), in path order.
pub fn find_manifests(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            let nested = path.join("manifest.json");
            if nested.is_file() {
                found.push(nested);
            }
        } else if path.extension().is_some_and(|e| e == "json") {
            found.push(path);
        }
    }
    found.sort();
    Ok(found)
}

fn plan(a: &PlanArgs) -> Outcome {
    require_dir(&a.datasets, "dataset directory")?;
    let paths = find_manifests(&a.datasets)?;
    if paths.is_empty() {
        return Err(Error::EmptyContent(format!(
            "no manifests in `{}`",
            a.datasets.display()
        )));
    }
    let manifests: Vec<DatasetManifest> = paths.iter().map(DatasetManifest::load).collect::<Result<_>>()?;
    let seeds = if a.seeds.is_empty() {
        (0..8).collect()
    } else {
        a.seeds.clone()
    };
    let held_out: BTreeSet<String> = a.hold_out.iter().cloned().collect();
    let plan = ExperimentPlan::build(&manifests, held_out, seeds)?;
    plan.save(&a.out)?;
    Ok((
        json!({
            "datasets": plan.datasets.len(),
            "held_out": plan.held_out,
            "combinations": plan.combinations.len(),
        }),
        vec![a.out.clone()],
    ))
}

fn average(a: &AverageArgs) -> Outcome {
    for p in a.inputs.iter().chain(&a.base) {
        require_file(p, "archive")?;
    }
    let inputs = a.inputs.iter().map(read_archive).collect::<Result<Vec<_>>>()?;
    let base = a.base.as_ref().map(read_archive).transpose()?;
    let mut request = AveragingRequest::new(inputs.iter().collect(), a.mode, a.scope);
    if let Some(b) = &base {
        request = request.with_base(b);
    }
    let out = average_weights(&request)?;
    write_archive(&out, &a.out)?;
    Ok((
        json!({
            "model_id": out.metadata.model_id,
            "inputs": inputs.len(),
            "tensors": out.len(),
        }),
        vec![a.out.clone()],
    ))
}

fn ensemble(a: &EnsembleArgs) -> Outcome {
    for d in &a.dirs {
        require_dir(d, "prediction directory")?;
    }
    let mut by_name: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    let listings = a
        .dirs
        .iter()
        .map(|d| list_rasters(d, RasterKind::Probability))
        .collect::<Result<Vec<_>>>()?;
    for listing in &listings {
        for e in listing {
            by_name.entry(e.file_name.clone()).or_default().push(e.path.clone());
        }
    }
    if by_name.is_empty() {
        return Err(Error::EmptyContent("no probability maps found".into()));
    }
    let incomplete: Vec<&str> = by_name
        .iter()
        .filter(|(_, v)| v.len() != a.dirs.len())
        .map(|(k, _)| k.as_str())
        .collect();
    if !incomplete.is_empty() {
        return Err(Error::Join(format!(
            "{} file(s) not present in every directory, e.g. {}",
            incomplete.len(),
            incomplete.iter().take(5).copied().collect::<Vec<_>>().join(", ")
        )));
    }
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let model_ids: Vec<String> = a.dirs.iter().map(|d| d.display().to_string()).collect();
    by_name
        .par_iter()
        .map(|(_, paths)| -> Result<()> {
            let maps = paths
                .iter()
                .map(load_probability_map)
                .collect::<Result<Vec<ProbabilityMap>>>()?;
            let members = maps
                .iter()
                .zip(&model_ids)
                .map(|(map, id)| EnsembleMember { model_id: id, map })
                .collect();
            let avg = ensemble_average(&EnsembleSet::new(members)?)?;
            save_probability_map(&avg, &a.out)?;
            Ok(())
        })
        .collect::<Result<()>>()?;
    Ok((json!({ "members": a.dirs.len(), "maps": by_name.len() }), vec![]))
}

enum LoadedPrediction {
    Mask(LesionMask),
    Probability(ProbabilityMap),
}

fn metrics(a: &MetricsArgs) -> Outcome {
    require_dir(&a.pred, "prediction directory")?;
    require_dir(&a.truth, "truth directory")?;
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(Error::Validation(format!("threshold {} outside [0, 1]", a.threshold)));
    }
    let test_dataset = a.test_dataset.clone().unwrap_or_else(|| dir_name(&a.truth));
    let truths = list_rasters(&a.truth, RasterKind::Mask)?;
    let probs: BTreeMap<(String, LesionCode), PathBuf> = list_rasters(&a.pred, RasterKind::Probability)?
        .into_iter()
        .map(|e| ((e.image_id, e.lesion), e.path))
        .collect();
    let binaries: BTreeMap<(String, LesionCode), PathBuf> = list_rasters(&a.pred, RasterKind::Mask)?
        .into_iter()
        .map(|e| ((e.image_id, e.lesion), e.path))
        .collect();

    let mut lesions = a.lesions.clone();
    lesions.sort();
    lesions.dedup();
    let mut metrics = a.metric.clone();
    metrics.sort();
    metrics.dedup();

    let mut records = Vec::new();
    for &lesion in &lesions {
        let entries: Vec<_> = truths.iter().filter(|e| e.lesion == lesion).collect();
        if entries.is_empty() {
            return Err(Error::EmptyContent(format!(
                "no {lesion} masks in `{}`",
                a.truth.display()
            )));
        }
        let loaded: Vec<(LoadedPrediction, LesionMask)> = entries
            .par_iter()
            .map(|e| {
                let key = (e.image_id.clone(), lesion);
                let pred = if let Some(p) = probs.get(&key) {
                    LoadedPrediction::Probability(load_probability_map(p)?)
                } else if let Some(p) = binaries.get(&key) {
                    LoadedPrediction::Mask(load_mask(p)?)
                } else {
                    return Err(Error::Join(format!(
                        "no prediction for {}.{lesion} in `{}`",
                        e.image_id,
                        a.pred.display()
                    )));
                };
                Ok((pred, load_mask(&e.path)?))
            })
            .collect::<Result<_>>()?;
        let pairs: Vec<(Prediction<'_>, &LesionMask)> = loaded
            .iter()
            .map(|(p, t)| {
                let pred = match p {
                    LoadedPrediction::Mask(m) => Prediction::Mask(m),
                    LoadedPrediction::Probability(m) => Prediction::Probability(m),
                };
                (pred, t)
            })
            .collect();
        for &metric in &metrics {
            let score = dataset_metric(&pairs, metric, a.agg, a.threshold)?;
            let mut rec = MetricRecord::new(
                a.combination.clone(),
                test_dataset.clone(),
                lesion,
                a.replicate_seed,
                metric,
                score.value,
            );
            rec.n_images = score.n_images;
            rec.degenerate_images = score.degenerate_images;
            records.push(rec);
        }
    }
    write_metric_records(create(&a.out)?, &records)?;
    let values: Vec<_> = records
        .iter()
        .map(|r| json!({ "lesion": r.lesion, "metric": r.metric, "value": r.value }))
        .collect();
    Ok((
        json!({ "test_dataset": test_dataset, "scores": values }),
        vec![a.out.clone()],
    ))
}

fn load_records(path: &Path) -> Result<Vec<MetricRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_metric_records(BufReader::new(file)).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn report(a: &ReportArgs) -> Outcome {
    let mut outputs = vec![a.out.clone()];
    if let Some(j) = &a.json {
        outputs.push(j.clone());
    }
    if a.strategies {
        let mut specs = Vec::new();
        for spec in &a.records {
            let (name, path) = spec
                .split_once('=')
                .ok_or_else(|| Error::Validation(format!("expected strategy=path, got `{spec}`")))?;
            let strategy: Strategy = name.parse()?;
            require_file(Path::new(path), "records file")?;
            specs.push((strategy, PathBuf::from(path)));
        }
        let mut grouped: BTreeMap<Strategy, Vec<MetricRecord>> = BTreeMap::new();
        for (strategy, path) in specs {
            grouped.entry(strategy).or_default().extend(load_records(&path)?);
        }
        let report = strategy_comparison(&grouped, a.metric)?;
        report.write_csv(create(&a.out)?)?;
        if let Some(j) = &a.json {
            write_json(j, &report)?;
        }
        return Ok((
            json!({ "combinations": report.rows.len(), "wins": report.win_counts }),
            outputs,
        ));
    }

    let scenario = a.scenario.as_deref().expect("clap enforces --scenario or --strategies");
    let plan_path = a
        .plan
        .as_ref()
        .ok_or_else(|| Error::Validation("--scenario requires --plan".into()))?;
    require_file(plan_path, "plan")?;
    let paths: Vec<PathBuf> = a.records.iter().map(PathBuf::from).collect();
    for p in &paths {
        require_file(p, "records file")?;
    }
    let plan = ExperimentPlan::load(plan_path)?;
    let mut records = Vec::new();
    for p in &paths {
        records.extend(load_records(p)?);
    }
    let report = scenario_table(&plan, scenario, a.metric, &records, a.allow_missing)?;
    report.write_csv(create(&a.out)?)?;
    if let Some(j) = &a.json {
        write_json(j, &report)?;
    }
    Ok((
        json!({
            "test_dataset": report.test_dataset,
            "rows": report.rows.len(),
            "best": report.best().map(|r| r.combination_id.clone()),
            "worst": report.worst().map(|r| r.combination_id.clone()),
            "missing": report.missing,
        }),
        outputs,
    ))
}

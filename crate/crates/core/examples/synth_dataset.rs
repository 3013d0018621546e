//! Writing a synthetic dataset (masks, predictions and a manifest) with a
//! known labelling style and predictor quality.
//!
//! Run with `cargo run --example synth_dataset [OUT_DIR]`.

use seg_genlab::metrics::{dataset_metric, Aggregation, MetricKind, Prediction};
use seg_genlab::raster::{load_mask, load_probability_map};
use seg_genlab::synth::{write_dataset, SynthConfig, SynthDatasetConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: std::path::PathBuf = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("seg-genlab-synth"));

    let config = SynthDatasetConfig {
        dataset_id: "SYN".into(),
        n_images: 20,
        lesions: vec![seg_genlab::raster::LesionCode::Ex],
        split_seed: Some(11),
        generator: SynthConfig::new(2024, 96, 96, 6.0, 40.0).with_quality(0.8),
    };
    let manifest = write_dataset(&config, &out)?;
    println!(
        "{} images of {:?} written to {}",
        manifest.images.len(),
        manifest.resolution,
        out.display()
    );

    // Score the stored predictions against the stored masks.
    let mut masks = Vec::new();
    let mut preds = Vec::new();
    for rec in &manifest.images {
        for (lesion, path) in &rec.masks {
            masks.push(load_mask(out.join(path))?);
            preds.push(load_probability_map(out.join(&rec.predictions[lesion]))?);
        }
    }
    let pairs: Vec<_> = preds
        .iter()
        .zip(&masks)
        .map(|(p, m)| (Prediction::Probability(p), m))
        .collect();
    for metric in [MetricKind::Dice, MetricKind::Aupr] {
        let s = dataset_metric(&pairs, metric, Aggregation::Micro, 0.5)?;
        println!("{metric} (micro) = {:.4}", s.value);
    }
    Ok(())
}

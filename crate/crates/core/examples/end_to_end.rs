//! A miniature cross-dataset study: synthetic training sets with different
//! labelling styles, a held-out test set, per-combination scores over
//! replicates, and the ranked scenario table.
//!
//! Run with `cargo run --example end_to_end`.

use std::collections::BTreeSet;

use seg_genlab::metrics::{dataset_metric, Aggregation, MetricKind, MetricRecord, Prediction};
use seg_genlab::plan::{DatasetManifest, ExperimentPlan, ImageRecord, SplitSpec, StyleTag};
use seg_genlab::raster::LesionCode;
use seg_genlab::report::scenario_table;
use seg_genlab::synth::{generate_mask, generate_prediction, synth_image_id, SynthConfig};

fn manifest(id: &str, style: StyleTag, n: u64) -> DatasetManifest {
    DatasetManifest {
        id: id.into(),
        style,
        lesions: vec![LesionCode::Ex],
        resolution: Some((64, 64)),
        images: (0..n)
            .map(|i| ImageRecord {
                image_id: synth_image_id(i),
                ..Default::default()
            })
            .collect(),
        split: SplitSpec::Generated {
            seed: 5,
            test_ratio: 0.3,
            val_ratio: 0.15,
        },
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let manifests = [
        manifest("FA", StyleTag::Fine, 60),
        manifest("FB", StyleTag::Fine, 60),
        manifest("CO", StyleTag::Coarse, 160),
        manifest("TST", StyleTag::Fine, 30),
    ];
    let plan = ExperimentPlan::build(&manifests, BTreeSet::from(["TST".to_string()]), vec![0, 1, 2])?;

    // Ground truth of the test set, drawn in the fine style.
    let test_cfg = SynthConfig::new(99, 64, 64, 8.0, 20.0);
    let truths = (0..30)
        .map(|i| generate_mask(&test_cfg, i).map(|m| m.mask))
        .collect::<seg_genlab::Result<Vec<_>>>()?;

    // Stand-in for training: more data helps, and data labelled in another
    // style counts for a quarter.
    let mut records = Vec::new();
    for combo in &plan.combinations {
        let effective: f64 = combo
            .members
            .iter()
            .zip(&combo.member_styles)
            .map(|(id, style)| {
                let n = plan.dataset(id).map_or(0, |d| d.train_images) as f64;
                if *style == StyleTag::Fine {
                    n
                } else {
                    0.25 * n
                }
            })
            .sum();
        let quality = effective / (effective + 30.0);
        for &seed in &plan.replicate_seeds {
            let preds = truths
                .iter()
                .enumerate()
                .map(|(i, t)| generate_prediction(t, quality, seed * 1000 + i as u64))
                .collect::<seg_genlab::Result<Vec<_>>>()?;
            let pairs: Vec<_> = preds
                .iter()
                .zip(&truths)
                .map(|(p, t)| (Prediction::Probability(p), t))
                .collect();
            let score = dataset_metric(&pairs, MetricKind::Aupr, Aggregation::Micro, 0.5)?;
            records.push(MetricRecord::new(
                &combo.combination_id,
                "TST",
                LesionCode::Ex,
                seed,
                MetricKind::Aupr,
                score.value,
            ));
        }
    }

    let report = scenario_table(&plan, "TST", MetricKind::Aupr, &records, false)?;
    let mut out = std::io::stdout().lock();
    report.write_csv(&mut out)?;
    if let (Some(best), Some(worst)) = (report.best(), report.worst()) {
        println!("best {} worst {}", best.combination_id, worst.combination_id);
    }
    Ok(())
}

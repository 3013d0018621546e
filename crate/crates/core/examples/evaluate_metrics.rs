//! Dice, binned AUPR, micro and macro aggregation, and replicate summaries.
//!
//! Run with `cargo run --example evaluate_metrics`.

use seg_genlab::metrics::{
    aggregate_replicates, binarize, binned_aupr, dataset_metric, dice, Aggregation, MetricKind, MetricRecord,
    Prediction,
};
use seg_genlab::raster::{LesionCode, LesionMask, ProbabilityMap};

fn square(id: &str, x0: usize, y0: usize, side: usize) -> seg_genlab::Result<LesionMask> {
    let mut m = LesionMask::empty(id, LesionCode::He, 8, 8)?;
    for y in y0..y0 + side {
        for x in x0..x0 + side {
            m.set(x, y, true);
        }
    }
    Ok(m)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = square("a", 1, 1, 4)?;
    let pred = square("a", 2, 2, 4)?;
    println!("dice(shifted square)   = {:.4}", dice(&pred, &truth)?);

    let empty = LesionMask::empty("b", LesionCode::He, 8, 8)?;
    println!("dice(empty, empty)     = {}", dice(&empty, &empty)?);

    // A soft prediction: confident inside the truth, a faint halo around it.
    let probs = (0..64)
        .map(|i| {
            let (x, y) = (i % 8, i / 8);
            if truth.get(x, y) {
                0.85
            } else if (0..=5).contains(&x) && (0..=5).contains(&y) {
                0.35
            } else {
                0.0
            }
        })
        .collect();
    let soft = ProbabilityMap::new("a", LesionCode::He, 8, 8, probs)?;
    let aupr = binned_aupr(&soft, &truth)?;
    println!("binned aupr            = {:.4}", aupr.value);
    println!("dice at 0.5            = {:.4}", dice(&binarize(&soft, 0.5)?, &truth)?);

    // Micro pools counts across images; macro averages per image and skips
    // images where the score is undefined.
    let truth_b = empty.clone();
    let pred_b = square("b", 0, 0, 1)?;
    let pairs = [(Prediction::Mask(&pred), &truth), (Prediction::Mask(&pred_b), &truth_b)];
    for agg in [Aggregation::Micro, Aggregation::Macro] {
        let s = dataset_metric(&pairs, MetricKind::Dice, agg, 0.5)?;
        println!(
            "dice {agg:?}: {:.4} over {} images ({} degenerate)",
            s.value, s.n_images, s.degenerate_images
        );
    }

    let records: Vec<MetricRecord> = [0.61, 0.64, 0.58]
        .iter()
        .enumerate()
        .map(|(seed, &v)| MetricRecord::new("DDR+MES", "IDR", LesionCode::He, seed as u64, MetricKind::Aupr, v))
        .collect();
    for (key, s) in aggregate_replicates(&records)? {
        println!(
            "{} on {} {}: mean {:.4} range [{:.2}, {:.2}] sd {:.4}",
            key.combination_id, key.test_dataset, key.lesion, s.mean, s.min, s.max, s.stddev
        );
    }
    Ok(())
}

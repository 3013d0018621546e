//! Seeded train/val/test splits and the enumeration of training
//! combinations around a held-out test set.
//!
//! Run with `cargo run --example plan_experiments [OUT_DIR]`.

use std::collections::BTreeSet;

use seg_genlab::plan::{split_sizes, DatasetManifest, ExperimentPlan, ImageRecord, SplitSpec, StyleTag};
use seg_genlab::raster::LesionCode;

fn manifest(id: &str, style: StyleTag, n: usize, seed: u64) -> DatasetManifest {
    DatasetManifest {
        id: id.into(),
        style,
        lesions: vec![LesionCode::Ex, LesionCode::He],
        resolution: None,
        images: (0..n)
            .map(|i| ImageRecord {
                image_id: format!("{id}-{i:04}"),
                ..Default::default()
            })
            .collect(),
        split: SplitSpec::Generated {
            seed,
            test_ratio: 0.3,
            val_ratio: 0.15,
        },
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("seg-genlab-plan"));
    std::fs::create_dir_all(&out)?;

    println!(
        "200 images split as (train, val, test) = {:?}",
        split_sizes(200, 0.3, 0.15)
    );

    let manifests = [
        manifest("IDR", StyleTag::Fine, 81, 1),
        manifest("DDR", StyleTag::Fine, 757, 2),
        manifest("FGA", StyleTag::Fine, 1100, 3),
        manifest("MES", StyleTag::Coarse, 200, 4),
    ];
    let held_out = BTreeSet::from(["IDR".to_string()]);
    let plan = ExperimentPlan::build(&manifests, held_out, vec![0, 1, 2])?;

    for d in &plan.datasets {
        println!(
            "{:<4} {:>4} train {:>4} val {:>4} test",
            d.id, d.train_images, d.val_images, d.test_images
        );
    }
    println!("{} combinations, smallest first:", plan.combinations.len());
    for c in &plan.combinations {
        println!(
            "  {:<12} {:>5} images  {}",
            c.combination_id, c.total_training_images, c.style
        );
    }

    let path = out.join("plan.json");
    plan.save(&path)?;
    assert_eq!(ExperimentPlan::load(&path)?, plan);
    println!("wrote {}", path.display());
    Ok(())
}

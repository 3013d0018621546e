//! Averaging per-pixel probabilities from several models, then saving the
//! result as a 16-bit PNG.
//!
//! Run with `cargo run --example ensemble_predictions [OUT_DIR]`.

use seg_genlab::ensemble::{ensemble_average, EnsembleMember, EnsembleSet};
use seg_genlab::raster::{load_probability_map, save_probability_map, LesionCode, ProbabilityMap};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("seg-genlab-ensemble"));
    std::fs::create_dir_all(&out)?;

    let (w, h) = (4, 2);
    let maps: Vec<ProbabilityMap> = [0.1, 0.5, 0.9]
        .iter()
        .enumerate()
        .map(|(k, &base)| {
            let probs = (0..w * h).map(|i| (base + 0.01 * (i + k) as f64).min(1.0)).collect();
            ProbabilityMap::new("img001", LesionCode::Ma, w, h, probs)
        })
        .collect::<seg_genlab::Result<_>>()?;

    let ids = ["unet-seed0", "unet-seed1", "unet-seed2"];
    let members = ids
        .iter()
        .zip(&maps)
        .map(|(id, map)| EnsembleMember { model_id: id, map })
        .collect();
    let mean = ensemble_average(&EnsembleSet::new(members)?)?;
    println!("ensemble row 0: {:?}", &mean.probs()[..w]);

    // Members must agree on the frame.
    let odd = ProbabilityMap::new("img001", LesionCode::Ma, 2, 2, vec![0.0; 4])?;
    let err = EnsembleSet::new(vec![
        EnsembleMember {
            model_id: "a",
            map: &maps[0],
        },
        EnsembleMember {
            model_id: "b",
            map: &odd,
        },
    ])
    .unwrap_err();
    println!("mismatched member: {err}");

    let path = save_probability_map(&mean, &out)?;
    let back = load_probability_map(&path)?;
    let worst = mean
        .probs()
        .iter()
        .zip(back.probs())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("wrote {} (max quantization error {worst:.2e})", path.display());
    Ok(())
}

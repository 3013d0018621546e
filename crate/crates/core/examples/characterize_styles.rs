//! Telling a fine labelling style from a coarse one by the lesion
//! count/area spread, plus image quality grade fractions.
//!
//! Run with `cargo run --example characterize_styles`.

use seg_genlab::characterization::{
    compare_styles, connected_components, lesion_stats, quality_distribution, style_summary, Connectivity,
    HistogramSpec, LesionStats,
};
use seg_genlab::synth::{generate_mask, SynthConfig};

fn stats_for(config: &SynthConfig, n: u64) -> seg_genlab::Result<Vec<LesionStats>> {
    (0..n)
        .map(|i| Ok(lesion_stats(&generate_mask(config, i)?.mask)))
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Fine annotators outline many small lesions; coarse ones draw a few big regions.
    let fine = SynthConfig::new(7, 128, 128, 12.0, 15.0);
    let coarse = SynthConfig::new(8, 128, 128, 3.0, 150.0).coarse();

    let one = generate_mask(&fine, 0)?;
    let comps = connected_components(&one.mask, Connectivity::Eight);
    println!(
        "fine image 0: {} blobs placed, {} components found",
        one.blobs.len(),
        comps.len()
    );

    let a = style_summary("FINE", &stats_for(&fine, 40)?, HistogramSpec::default())?;
    let b = style_summary("COARSE", &stats_for(&coarse, 40)?, HistogramSpec::default())?;
    for s in [&a, &b] {
        let sp = s.spread.expect("both sets have lesions");
        println!(
            "{:<7} median log10 count {:.2} (IQR {:.2})  median log10 area {:.2} (IQR {:.2})  histogram total {}",
            s.dataset_id,
            sp.median_log_count,
            sp.iqr_log_count,
            sp.median_log_area,
            sp.iqr_log_area,
            s.histogram.total()
        );
    }
    println!("COARSE relative to FINE: {}", compare_styles(&b, &a)?);

    let grades = "image_id,grade\nimg1,good\nimg2,good\nimg3,usable\nimg4,reject\n";
    let q = quality_distribution("FINE", grades.as_bytes())?;
    println!(
        "quality: good {:.2} usable {:.2} reject {:.2}",
        q.good, q.usable, q.reject
    );
    Ok(())
}

//! Cropping a fundus photograph to its bright content, fitting it into a
//! square frame, and tiling the result into patches.
//!
//! Run with `cargo run --example preprocess_frame`.

use seg_genlab::raster::{
    apply_transform, compute_crop_to, extract_patches, FundusImage, Interpolation, LesionCode, LesionMask,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A 60x40 photo: a bright disc on a black border.
    let (w, h) = (60usize, 40usize);
    let inside = |x: usize, y: usize| {
        let (dx, dy) = (x as f64 - 30.0, y as f64 - 20.0);
        dx * dx + dy * dy < 18.0 * 18.0
    };
    let mut pixels = Vec::with_capacity(w * h * 3);
    let mut lesion = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let v = if inside(x, y) { 180 } else { 3 };
            pixels.extend([v, v / 2, v / 4]);
            lesion.push((26..30).contains(&x) && (18..22).contains(&y));
        }
    }
    let image = FundusImage::new("photo", w, h, pixels)?;
    let mask = LesionMask::new("photo", LesionCode::Ex, w, h, lesion)?;

    let t = compute_crop_to(&image, 10, 64)?;
    println!("crop {:?} scale {:.3} pad ({}, {})", t.crop, t.scale, t.pad_x, t.pad_y);

    // Images interpolate; masks stay binary with nearest neighbour.
    let framed = apply_transform(&image, &t, Interpolation::Bilinear)?;
    let framed_mask = apply_transform(&mask, &t, Interpolation::Nearest)?;
    println!(
        "framed {}x{}, lesion pixels {} -> {}",
        framed.width(),
        framed.height(),
        mask.count(),
        framed_mask.count()
    );

    let patches = extract_patches(&framed_mask, 24, 20)?;
    let hit: Vec<_> = patches
        .iter()
        .filter(|(_, p)| p.count() > 0)
        .map(|(o, _)| (o.x, o.y))
        .collect();
    println!("{} patches of 24px, lesion seen in those at {hit:?}", patches.len());
    Ok(())
}

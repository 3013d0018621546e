//! Stochastic weight averaging and model soups over tensor archives.
//!
//! Run with `cargo run --example average_weights [OUT_DIR]`.

use seg_genlab::archive::ArchiveMetadata;
use seg_genlab::{average_weights, read_archive, write_archive, AveragingMode, AveragingRequest, Scope, TensorArchive};

fn checkpoint(model: &str, iteration: u64, hp: &str, enc: f32, dec: f32) -> seg_genlab::Result<TensorArchive> {
    let meta = ArchiveMetadata::new(model, iteration, hp).with_roles(&["encoder."], &["decoder."]);
    TensorArchive::new(meta)
        .with_tensor("encoder.conv1.weight", vec![2, 2], vec![enc; 4])?
        .with_tensor("decoder.head.weight", vec![3], vec![dec; 3])
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("seg-genlab-average"));
    std::fs::create_dir_all(&out)?;

    // Three snapshots of one run, same hyperparameters.
    let run: Vec<TensorArchive> = (0..3u64)
        .map(|i| checkpoint("run-a", 1000 * (i + 1), "hp0", i as f32 + 1.0, 10.0 * (i as f32 + 1.0)))
        .collect::<seg_genlab::Result<_>>()?;
    let refs: Vec<&TensorArchive> = run.iter().collect();

    let swa = average_weights(&AveragingRequest::new(refs.clone(), AveragingMode::Swa, Scope::Full))?;
    println!(
        "swa full    encoder={:?}",
        swa.get("encoder.conv1.weight").unwrap().data()
    );
    println!(
        "            decoder={:?}",
        swa.get("decoder.head.weight").unwrap().data()
    );

    // Encoder-only averaging keeps the decoder of the base (the first input here).
    let enc = average_weights(&AveragingRequest::new(refs, AveragingMode::Swa, Scope::Encoder))?;
    println!(
        "swa encoder decoder={:?}",
        enc.get("decoder.head.weight").unwrap().data()
    );

    // A soup mixes final weights of runs with different hyperparameters.
    let finals = [
        checkpoint("run-a", 3000, "hp0", 1.0, 1.0)?,
        checkpoint("run-b", 3000, "hp1", 2.0, 4.0)?,
        checkpoint("run-c", 3000, "hp2", 6.0, 7.0)?,
    ];
    let soup = average_weights(
        &AveragingRequest::new(finals.iter().collect(), AveragingMode::Soup, Scope::Decoder).with_base(&finals[1]),
    )?;
    println!("soup decoder provenance={:?}", soup.metadata.provenance);

    let path = out.join("soup.sglb");
    write_archive(&soup, &path)?;
    let back = read_archive(&path)?;
    assert!(back.bits_eq(&soup));
    println!("wrote {}", path.display());
    Ok(())
}

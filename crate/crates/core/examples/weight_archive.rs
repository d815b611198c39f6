//! Saving and loading weights, and what happens to a damaged archive.

use qscore::model::{archive_fingerprint, read_archive, write_archive, Model, ModelConfig};

fn main() -> anyhow::Result<()> {
    let cfg = ModelConfig::tiny().with_vocab_size(100).with_max_positions(64);
    let (cfg, weights) = Model::<f32>::init(cfg, 3)?.into_parts();
    let bytes = write_archive(&weights, &cfg)?;
    println!("{} bytes, fingerprint {}", bytes.len(), archive_fingerprint(&bytes));

    let path = std::env::temp_dir().join("qscore-example.qsw");
    std::fs::write(&path, &bytes)?;
    let (loaded, loaded_cfg) = qscore::model::load_weights(&path)?;
    println!("reloaded {} tensors from {}, identical: {}", loaded.tensors().len(), path.display(), loaded == weights && loaded_cfg == cfg);

    let mut damaged = bytes.clone();
    let n = damaged.len();
    damaged[n - 20] ^= 0xff;
    println!("flipped byte: {}", read_archive(&damaged).unwrap_err());
    println!("truncated:    {}", read_archive(&bytes[..n / 2]).unwrap_err());
    let mut future = bytes;
    future[3] = b'9';
    println!("newer format: {}", read_archive(&future).unwrap_err());
    Ok(())
}

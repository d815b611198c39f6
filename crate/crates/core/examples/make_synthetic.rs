//! Writes the planted-keyword corpus and its vocabulary to disk so the CLI can
//! be tried without the real dataset.
//!
//! cargo run --release --example make_synthetic -- /tmp/qs 2000

use std::fs::File;
use std::path::PathBuf;

use qscore::corpus::write_corpus_csv;
use qscore::synthetic::{keyword_rows, keyword_vocab};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "synthetic".into()));
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2000);
    std::fs::create_dir_all(&dir)?;
    write_corpus_csv(&keyword_rows(n, 1), File::create(dir.join("train.csv"))?)?;
    std::fs::write(dir.join("vocab.txt"), keyword_vocab().to_file_string())?;
    println!("wrote {n} rows to {}", dir.join("train.csv").display());
    println!("wrote vocabulary to {}", dir.join("vocab.txt").display());
    Ok(())
}

//! Exploratory statistics for a corpus CSV: histograms, correlation tables,
//! sentiment scores and a summary, written under `<out>/eda`.
//!
//! cargo run --release --example eda -- path/to/train.csv out
//!
//! Without arguments it runs on the synthetic corpus.

use std::path::PathBuf;

use qscore::app::{cmd_eda, AppConfig};
use qscore::corpus::write_corpus_csv;
use qscore::synthetic::keyword_rows;

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let out = std::env::temp_dir().join("qscore-eda");
    let corpus = match args.next() {
        Some(p) => PathBuf::from(p),
        None => {
            std::fs::create_dir_all(&out)?;
            let p = out.join("synthetic.csv");
            write_corpus_csv(&keyword_rows(500, 1), std::fs::File::create(&p)?)?;
            p
        }
    };
    let cfg = AppConfig {
        corpus: Some(corpus),
        output_dir: args.next().map(PathBuf::from).unwrap_or(out),
        ..AppConfig::default()
    };
    let summary = cmd_eda(&cfg)?;
    println!("{} rows, fingerprint {}", summary.rows, &summary.fingerprint[..16]);
    for (name, mean) in &summary.target_means {
        println!("  {name:<40} mean {mean:.3}");
    }
    println!(
        "{} undefined target correlations, {} undefined feature correlations",
        summary.undefined_target_correlations, summary.undefined_feature_correlations
    );
    println!("wrote {} files to {}", summary.files.len() + 1, cfg.output_dir.join("eda").display());
    Ok(())
}

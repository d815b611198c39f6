//! A small learning-rate sweep on the synthetic corpus. Prints the grid with
//! epochs down and learning rates across.

use qscore::model::ModelConfig;
use qscore::synthetic::{keyword_corpus, keyword_vocab};
use qscore::train::{lr_sweep, TrainConfig};

fn main() -> anyhow::Result<()> {
    let corpus = keyword_corpus(600, 3);
    let vocab = keyword_vocab();
    let model = ModelConfig::tiny().with_vocab_size(vocab.len()).with_max_positions(48);
    let base = TrainConfig {
        epochs: 3,
        max_len: 48,
        ..TrainConfig::default()
    };
    let sweep = lr_sweep(&corpus, &vocab, &model, &base, &[1e-4, 3e-4, 1e-3])?;
    print!("{}", sweep.grid.to_csv());
    if let Some((lr, epoch, mse)) = sweep.grid.best() {
        println!("best: lr {lr:e}, epoch {epoch}, mse {mse:.4}");
    }
    Ok(())
}

//! Trains the tiny model on the planted-keyword corpus and compares the
//! validation MSE with the constant-mean baseline.

use qscore::model::ModelConfig;
use qscore::synthetic::{keyword_corpus, keyword_vocab};
use qscore::train::{constant_mean_baseline, train_run, TrainConfig};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let corpus = keyword_corpus(2000, 1);
    let vocab = keyword_vocab();
    let model = ModelConfig::tiny().with_vocab_size(vocab.len()).with_max_positions(64);
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        epochs: 3,
        max_len: 64,
        ..TrainConfig::default()
    };
    let baseline = constant_mean_baseline(&corpus, &cfg)?;
    let out = train_run(&corpus, &vocab, &model, &cfg)?;
    println!("baseline mse {baseline:.4}");
    for (e, (m, s)) in out.validation_mse.iter().zip(&out.epoch_seconds).enumerate() {
        println!("epoch {}: validation mse {m:.4} ({s:.1}s)", e + 1);
    }
    Ok(())
}

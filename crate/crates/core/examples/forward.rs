//! One forward pass through a freshly initialized tiny encoder: the 20 named
//! scores and the first layer's attention from [CLS].

use qscore::model::{Mode, Model, ModelConfig};
use qscore::synthetic::keyword_vocab;
use qscore::tokenizer::encode_pair;

fn main() -> anyhow::Result<()> {
    let vocab = keyword_vocab();
    let cfg = ModelConfig::tiny().with_vocab_size(vocab.len()).with_max_positions(32);
    println!("tiny preset: {} parameters (base preset: {})", cfg.parameter_count(), ModelConfig::base().parameter_count());
    let model = Model::<f32>::init(cfg, 42)?;
    let x = encode_pair("how do i use amber", "the server error is there.", &vocab, 32);

    let pass = model.forward(&x, Mode::Eval)?;
    println!("{} active positions of {}", pass.positions().len(), x.len());
    let attn = pass.attention(0, 0);
    let cls: Vec<String> = attn.row(0).iter().map(|p| format!("{p:.3}")).collect();
    println!("layer 0 head 0 attention from [CLS]: {}", cls.join(" "));

    for (name, score) in pass.prediction.named() {
        println!("  {name:<40} {score:.4}");
    }
    Ok(())
}

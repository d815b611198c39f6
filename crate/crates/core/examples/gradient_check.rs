//! Compares analytic gradients with central differences on a handful of
//! parameters from every tensor of a small f64 model.

use qscore::model::{tensor_specs, Mode, Model, ModelConfig};
use qscore::tokenizer::TokenizedInput;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let cfg = ModelConfig::tiny().with_vocab_size(20).with_max_positions(10).with_dropout(0.0);
    let mut model = Model::<f64>::init(cfg.clone(), 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    // Move away from the symmetric start so layer norms and biases carry signal.
    for t in model.weights_mut().tensors_mut() {
        t.iter_mut().for_each(|v| *v += rng.gen_range(-0.2..0.2));
    }
    let x = TokenizedInput::from_ids(&[2, 5, 9, 3, 7, 11, 12, 3], 3, 0, 10);
    let target: Vec<f64> = (0..20).map(|_| rng.gen()).collect();
    let (_, grads) = model.loss_and_gradients(&x, &target, Mode::Eval)?;

    let loss = |m: &Model<f64>| m.loss_and_gradients(&x, &target, Mode::Eval).unwrap().0;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let specs = tensor_specs(&cfg);
    for (t, spec) in specs.iter().enumerate() {
        let n = spec.numel();
        for _ in 0..3 {
            // Embedding rows for unused tokens have zero gradient; sample the used rows.
            let i = if t == 0 { 5 * cfg.hidden_size + rng.gen_range(0..cfg.hidden_size) } else { rng.gen_range(0..n) };
            let orig = model.weights().tensors()[t][i];
            model.weights_mut().tensors_mut()[t][i] = orig + h;
            let up = loss(&model);
            model.weights_mut().tensors_mut()[t][i] = orig - h;
            let down = loss(&model);
            model.weights_mut().tensors_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.tensors()[t][i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
            if t < 5 || t >= specs.len() - 4 {
                println!("{:<28} [{i:>5}] analytic {analytic:+.6e} numeric {numeric:+.6e}", spec.name);
            }
        }
    }
    println!("max relative error over {} samples: {worst:.2e}", specs.len() * 3);
    Ok(())
}

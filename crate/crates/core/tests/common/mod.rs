//! Test-only oracles, written independently of the library's matrix code.
#![allow(dead_code)]

use qscore::model::{tensor_specs, Model, ModelConfig, ModelWeights};
use qscore::tokenizer::TokenizedInput;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Mat = Vec<Vec<f64>>;

fn matmul(x: &Mat, w: &[f64], cols: usize) -> Mat {
    x.iter()
        .map(|row| {
            (0..cols)
                .map(|j| {
                    let mut s = 0.0;
                    for (i, &v) in row.iter().enumerate() {
                        s += v * w[i * cols + j];
                    }
                    s
                })
                .collect()
        })
        .collect()
}

fn add_bias(mut x: Mat, b: &[f64]) -> Mat {
    for row in &mut x {
        for (v, bb) in row.iter_mut().zip(b) {
            *v += bb;
        }
    }
    x
}

fn layer_norm(x: &Mat, gamma: &[f64], beta: &[f64], eps: f64) -> Mat {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            row.iter()
                .enumerate()
                .map(|(i, v)| (v - mean) / (var + eps).sqrt() * gamma[i] + beta[i])
                .collect()
        })
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Straight-line eval-mode forward pass over the full padded sequence, with
/// masked keys set to negative infinity before the softmax.
pub fn naive_forward(cfg: &ModelConfig, weights: &ModelWeights<f64>, input: &TokenizedInput) -> Vec<f64> {
    let t: Vec<Vec<f64>> = weights.tensors().iter().map(|s| s.to_vec()).collect();
    let h = cfg.hidden_size;
    let n = input.token_ids.len();
    let eps = cfg.layer_norm_eps;

    let mut x: Mat = (0..n)
        .map(|p| {
            let tok = input.token_ids[p] as usize;
            let seg = input.segment_ids[p] as usize;
            (0..h)
                .map(|d| t[0][tok * h + d] + t[1][p * h + d] + t[2][seg * h + d])
                .collect()
        })
        .collect();
    x = layer_norm(&x, &t[3], &t[4], eps);

    let heads = cfg.num_heads;
    let dh = h / heads;
    let per_layer = 16;
    for l in 0..cfg.num_layers {
        let b = 5 + l * per_layer;
        let q = add_bias(matmul(&x, &t[b], h), &t[b + 1]);
        let k = add_bias(matmul(&x, &t[b + 2], h), &t[b + 3]);
        let v = add_bias(matmul(&x, &t[b + 4], h), &t[b + 5]);
        let mut ctx = vec![vec![0.0; h]; n];
        for head in 0..heads {
            for i in 0..n {
                let mut scores = vec![0.0; n];
                for j in 0..n {
                    if input.attention_mask[j] == 0 {
                        scores[j] = f64::NEG_INFINITY;
                        continue;
                    }
                    let mut s = 0.0;
                    for d in head * dh..(head + 1) * dh {
                        s += q[i][d] * k[j][d];
                    }
                    scores[j] = s / (dh as f64).sqrt();
                }
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                for d in head * dh..(head + 1) * dh {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += exps[j] / z * v[j][d];
                    }
                    ctx[i][d] = acc;
                }
            }
        }
        let o = add_bias(matmul(&ctx, &t[b + 6], h), &t[b + 7]);
        let r1: Mat = x.iter().zip(&o).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect()).collect();
        let x1 = layer_norm(&r1, &t[b + 8], &t[b + 9], eps);
        let f = cfg.ff_size;
        let f1 = add_bias(matmul(&x1, &t[b + 10], f), &t[b + 11]);
        let g: Mat = f1.iter().map(|r| r.iter().map(|&v| gelu(v)).collect()).collect();
        let f2 = add_bias(matmul(&g, &t[b + 12], h), &t[b + 13]);
        let r2: Mat = x1.iter().zip(&f2).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect()).collect();
        x = layer_norm(&r2, &t[b + 14], &t[b + 15], eps);
    }

    let p = 5 + cfg.num_layers * per_layer;
    let cls = vec![x[0].clone()];
    let pooled: Mat = add_bias(matmul(&cls, &t[p], h), &t[p + 1])
        .into_iter()
        .map(|r| r.into_iter().map(f64::tanh).collect())
        .collect();
    let logits = add_bias(matmul(&pooled, &t[p + 2], cfg.n_outputs), &t[p + 3]);
    logits[0].iter().map(|z| 1.0 / (1.0 + (-z).exp())).collect()
}

/// Mean binary cross-entropy over a batch, recomputed from scratch.
pub fn naive_batch_loss(cfg: &ModelConfig, weights: &ModelWeights<f64>, batch: &[(TokenizedInput, Vec<f64>)]) -> f64 {
    let mut total = 0.0;
    let mut count = 0.0;
    for (input, target) in batch {
        let p = naive_forward(cfg, weights, input);
        for (pi, ti) in p.iter().zip(target) {
            let pi = pi.clamp(1e-7, 1.0 - 1e-7);
            total -= ti * pi.ln() + (1.0 - ti) * (1.0 - pi).ln();
            count += 1.0;
        }
    }
    total / count
}

/// Central-difference gradient of `loss` with respect to every parameter.
pub fn finite_difference_gradients<F>(weights: &ModelWeights<f64>, step: f64, loss: F) -> Vec<f64>
where
    F: Fn(&ModelWeights<f64>) -> f64 + Sync,
{
    let sizes: Vec<usize> = weights.tensors().iter().map(|s| s.len()).collect();
    let coords: Vec<(usize, usize)> = sizes
        .iter()
        .enumerate()
        .flat_map(|(t, &n)| (0..n).map(move |i| (t, i)))
        .collect();
    coords
        .par_chunks(256)
        .flat_map_iter(|chunk| {
            let mut w = weights.clone();
            chunk
                .iter()
                .map(|&(t, i)| {
                    let orig = w.tensors()[t][i];
                    w.tensors_mut()[t][i] = orig + step;
                    let up = loss(&w);
                    w.tensors_mut()[t][i] = orig - step;
                    let down = loss(&w);
                    w.tensors_mut()[t][i] = orig;
                    (up - down) / (2.0 * step)
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Relative error with an absolute floor on the denominator, so entries that
/// are zero on both sides count as exact.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Gradient-check configuration: the tiny preset shape with a small vocabulary.
pub fn gradcheck_config() -> ModelConfig {
    ModelConfig::tiny()
        .with_vocab_size(24)
        .with_max_positions(12)
        .with_dropout(0.0)
}

/// Random input: `[CLS] a.. [SEP] b.. [SEP]` followed by padding.
pub fn random_input(rng: &mut ChaCha8Rng, vocab: usize, max_len: usize) -> TokenizedInput {
    let active = rng.gen_range(3..=max_len);
    let title = rng.gen_range(0..=active - 3);
    let mut ids = vec![2u32];
    ids.extend((0..title).map(|_| rng.gen_range(4..vocab as u32)));
    ids.push(3);
    ids.extend((0..active - 3 - title).map(|_| rng.gen_range(4..vocab as u32)));
    ids.push(3);
    TokenizedInput::from_ids(&ids, 3, 0, max_len)
}

pub fn random_targets(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen::<f64>()).collect()
}

/// A model whose weights are perturbed away from the symmetric initial values
/// (non-trivial layer-norm scales and biases), so every code path carries signal.
pub fn perturbed_model(cfg: ModelConfig, seed: u64) -> Model<f64> {
    let mut model = Model::<f64>::init(cfg.clone(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let specs = tensor_specs(&cfg);
    for (spec, t) in specs.iter().zip(model.weights_mut().tensors_mut()) {
        for v in t.iter_mut() {
            *v += match spec.kind {
                qscore::model::TensorKind::Kernel | qscore::model::TensorKind::Embedding => {
                    rng.gen_range(-0.1..0.1)
                }
                _ => rng.gen_range(-0.3..0.3),
            };
        }
    }
    model
}

/// Mean binary cross-entropy over a batch using the library's eval forward pass.
pub fn batch_loss(cfg: &ModelConfig, weights: &ModelWeights<f64>, batch: &[(TokenizedInput, Vec<f64>)]) -> f64 {
    let model = Model::new(cfg.clone(), weights.clone()).unwrap();
    let mut total = 0.0;
    let mut count = 0.0;
    for (input, target) in batch {
        let p = model.predict(input).unwrap().scores;
        for (pi, ti) in p.iter().zip(target) {
            let pi = pi.clamp(1e-7, 1.0 - 1e-7);
            total -= ti * pi.ln() + (1.0 - ti) * (1.0 - pi).ln();
            count += 1.0;
        }
    }
    total / count
}

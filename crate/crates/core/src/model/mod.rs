//! BERT-shaped transformer encoder with a sigmoid regression head.
//!
//! The encoder is generic over the float type so that the same code runs in
//! `f32` for training and serving and in `f64` for gradient checking.

mod archive;
mod weights;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis, ScalarOperand};
use num_traits::{Float, NumCast};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Debug;
use std::iter::Sum;
use thiserror::Error;

pub use archive::{archive_fingerprint, load_weights, read_archive, save_weights, write_archive, ARCHIVE_MAGIC};
pub use weights::{tensor_specs, Dense, EncoderLayer, LayerNorm, ModelWeights, TensorKind, TensorSpec};

use crate::corpus::{TARGET_COUNT, TARGET_NAMES};
use crate::tokenizer::TokenizedInput;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch in `{tensor}`: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        tensor: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("corrupt archive: {0}")]
    CorruptArchive(String),
    #[error("unsupported archive version `{0}`")]
    UnsupportedVersion(String),
    #[error("archive I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Floating-point element type of the encoder.
pub trait Real:
    Float
    + ndarray::LinalgScalar
    + ScalarOperand
    + Debug
    + Default
    + Send
    + Sync
    + Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + 'static
{
    fn erf(self) -> Self;

    fn cast(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("finite f64 converts")
    }
}

impl Real for f32 {
    fn erf(self) -> Self {
        libm::erff(self)
    }
}

impl Real for f64 {
    fn erf(self) -> Self {
        libm::erf(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_size: usize,
    pub num_heads: usize,
    pub ff_size: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    #[serde(default = "default_type_vocab")]
    pub type_vocab_size: usize,
    pub dropout: f64,
    pub n_outputs: usize,
    #[serde(default = "default_ln_eps")]
    pub layer_norm_eps: f64,
}

fn default_type_vocab() -> usize {
    2
}

fn default_ln_eps() -> f64 {
    1e-12
}

/// Size of the published uncased WordPiece vocabulary.
pub const BASE_VOCAB_SIZE: usize = 30522;

impl ModelConfig {
    /// 12 layers, hidden 768, 12 heads, feed-forward 3072.
    pub fn base() -> Self {
        ModelConfig {
            num_layers: 12,
            hidden_size: 768,
            num_heads: 12,
            ff_size: 3072,
            vocab_size: BASE_VOCAB_SIZE,
            max_positions: 512,
            type_vocab_size: 2,
            dropout: 0.1,
            n_outputs: TARGET_COUNT,
            layer_norm_eps: 1e-12,
        }
    }

    /// 2 layers, hidden 64, 2 heads, feed-forward 128.
    pub fn tiny() -> Self {
        ModelConfig {
            num_layers: 2,
            hidden_size: 64,
            num_heads: 2,
            ff_size: 128,
            ..Self::base()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "base" => Some(Self::base()),
            "tiny" => Some(Self::tiny()),
            _ => None,
        }
    }

    pub fn with_vocab_size(mut self, vocab_size: usize) -> Self {
        self.vocab_size = vocab_size;
        self
    }

    pub fn with_max_positions(mut self, max_positions: usize) -> Self {
        self.max_positions = max_positions;
        self
    }

    pub fn with_dropout(mut self, dropout: f64) -> Self {
        self.dropout = dropout;
        self
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.num_heads == 0 || self.hidden_size % self.num_heads != 0 {
            return bad(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden_size, self.num_heads
            ));
        }
        if self.hidden_size == 0 || self.ff_size == 0 || self.vocab_size == 0 {
            return bad("hidden, feed-forward and vocabulary sizes must be positive".into());
        }
        if self.max_positions == 0 || self.type_vocab_size == 0 {
            return bad("max_positions and type_vocab_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} not in [0, 1)", self.dropout));
        }
        if self.n_outputs != TARGET_COUNT {
            return bad(format!("n_outputs must be {TARGET_COUNT}, got {}", self.n_outputs));
        }
        if !(self.layer_norm_eps > 0.0) {
            return bad("layer_norm_eps must be positive".into());
        }
        Ok(())
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        tensor_specs(self).iter().map(|s| s.numel()).sum()
    }
}

/// Sigmoid scores in target order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction<T> {
    pub scores: Vec<T>,
}

impl<T: Real> Prediction<T> {
    pub fn named(&self) -> impl Iterator<Item = (&'static str, T)> + '_ {
        TARGET_NAMES.iter().copied().zip(self.scores.iter().copied())
    }
}

/// Dropout is applied only in training mode, drawing masks from the given generator.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

struct NormCache<T> {
    xhat: Array2<T>,
    inv_std: Array1<T>,
}

struct LayerCache<T> {
    input: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    probs: Vec<Array2<T>>,
    context: Array2<T>,
    attn_drop: Option<Array2<T>>,
    attn_norm: NormCache<T>,
    mid: Array2<T>,
    ff_pre: Array2<T>,
    ff_act: Array2<T>,
    ff_drop: Option<Array2<T>>,
    ff_norm: NormCache<T>,
}

/// Everything the backward pass needs from one forward pass over one input.
pub struct ForwardPass<T> {
    positions: Vec<usize>,
    token_ids: Vec<usize>,
    segment_ids: Vec<usize>,
    embed_norm: NormCache<T>,
    embed_drop: Option<Array2<T>>,
    layers: Vec<LayerCache<T>>,
    cls_hidden: Array2<T>,
    pooled: Array2<T>,
    pooled_drop: Option<Array2<T>>,
    head_input: Array2<T>,
    pub logits: Vec<T>,
    pub prediction: Prediction<T>,
}

impl<T: Real> ForwardPass<T> {
    /// Sequence positions that took part in the computation (mask = 1).
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// Attention probabilities of one head, rows and columns over [`Self::positions`].
    pub fn attention(&self, layer: usize, head: usize) -> ArrayView2<'_, T> {
        self.layers[layer].probs[head].view()
    }
}

fn gelu<T: Real>(x: T) -> T {
    let half = T::cast(0.5);
    half * x * (T::one() + (x * T::cast(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

fn gelu_grad<T: Real>(x: T) -> T {
    let half = T::cast(0.5);
    let cdf = half * (T::one() + (x * T::cast(std::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = (-(x * x) * half).exp() * T::cast(0.398_942_280_401_432_7);
    cdf + x * pdf
}

pub fn sigmoid<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

fn dense_forward<T: Real>(x: &Array2<T>, d: &Dense<T>) -> Array2<T> {
    x.dot(&d.weight) + &d.bias
}

/// Accumulates parameter gradients into `g` and returns the input gradient.
fn dense_backward<T: Real>(x: &Array2<T>, dy: &Array2<T>, d: &Dense<T>, g: &mut Dense<T>) -> Array2<T> {
    general_mat_mul(T::one(), &x.t(), dy, T::one(), &mut g.weight);
    g.bias += &dy.sum_axis(Axis(0));
    dy.dot(&d.weight.t())
}

fn norm_forward<T: Real>(x: &Array2<T>, ln: &LayerNorm<T>, eps: T) -> (Array2<T>, NormCache<T>) {
    let width = T::cast(x.ncols() as f64);
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / width;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).sum::<T>() / width;
        *inv = T::one() / (var + eps).sqrt();
        let s = *inv;
        row.mapv_inplace(|v| v * s);
    }
    let y = &xhat * &ln.gamma + &ln.beta;
    (y, NormCache { xhat, inv_std })
}

fn norm_backward<T: Real>(dy: &Array2<T>, cache: &NormCache<T>, ln: &LayerNorm<T>, g: &mut LayerNorm<T>) -> Array2<T> {
    g.gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
    g.beta += &dy.sum_axis(Axis(0));
    let width = T::cast(dy.ncols() as f64);
    let mut dx = dy * &ln.gamma;
    for ((mut row, xhat), &inv) in dx
        .rows_mut()
        .into_iter()
        .zip(cache.xhat.rows())
        .zip(cache.inv_std.iter())
    {
        let mean_d = row.sum() / width;
        let mean_dx = row.iter().zip(xhat.iter()).map(|(&a, &b)| a * b).sum::<T>() / width;
        for (d, &xh) in row.iter_mut().zip(xhat.iter()) {
            *d = inv * (*d - mean_d - xh * mean_dx);
        }
    }
    dx
}

fn softmax_rows<T: Real>(s: &mut Array2<T>) {
    for mut row in s.rows_mut() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn dropout_mask<T: Real>(shape: (usize, usize), rate: f64, rng: Option<&mut ChaCha8Rng>) -> Option<Array2<T>> {
    let rng = rng?;
    let keep = T::cast(1.0 / (1.0 - rate));
    Some(Array2::from_shape_fn(shape, |_| {
        if rng.gen::<f64>() < rate {
            T::zero()
        } else {
            keep
        }
    }))
}

fn apply_mask<T: Real>(x: Array2<T>, mask: &Option<Array2<T>>) -> Array2<T> {
    match mask {
        Some(m) => x * m,
        None => x,
    }
}

/// Clamp keeping sigmoid outputs strictly inside (0, 1) at the type's precision.
fn clamp_unit<T: Real>(p: T) -> T {
    p.max(T::epsilon()).min(T::one() - T::epsilon())
}

/// An encoder: configuration plus weights whose shapes were audited against it.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    weights: ModelWeights<T>,
}

impl<T: Real> Model<T> {
    pub fn new(config: ModelConfig, weights: ModelWeights<T>) -> Result<Self, ModelError> {
        config.validate()?;
        weights.audit(&config)?;
        Ok(Model { config, weights })
    }

    /// Fresh weights: truncated normal(0, 0.02) kernels and embeddings, zero
    /// biases, unit layer-norm scales.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let weights = ModelWeights::init(&config, seed);
        Ok(Model { config, weights })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &ModelWeights<T> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut ModelWeights<T> {
        &mut self.weights
    }

    pub fn into_parts(self) -> (ModelConfig, ModelWeights<T>) {
        (self.config, self.weights)
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            weights: self.weights.cast(),
        }
    }

    fn check_input(&self, input: &TokenizedInput) -> Result<Vec<usize>, ModelError> {
        let n = input.token_ids.len();
        if input.segment_ids.len() != n || input.attention_mask.len() != n {
            return Err(ModelError::ShapeMismatch {
                tensor: "input".into(),
                expected: vec![n, n, n],
                found: vec![n, input.segment_ids.len(), input.attention_mask.len()],
            });
        }
        if n > self.config.max_positions {
            return Err(ModelError::ShapeMismatch {
                tensor: "embeddings.position".into(),
                expected: vec![self.config.max_positions],
                found: vec![n],
            });
        }
        if input.attention_mask.first() != Some(&1) {
            return Err(ModelError::InvalidInput("position 0 must be unmasked".into()));
        }
        let positions: Vec<usize> = (0..n).filter(|&i| input.attention_mask[i] == 1).collect();
        for &i in &positions {
            if input.token_ids[i] as usize >= self.config.vocab_size {
                return Err(ModelError::InvalidInput(format!(
                    "token id {} at position {i} exceeds vocabulary size {}",
                    input.token_ids[i], self.config.vocab_size
                )));
            }
            if input.segment_ids[i] as usize >= self.config.type_vocab_size {
                return Err(ModelError::InvalidInput(format!(
                    "segment id {} at position {i}",
                    input.segment_ids[i]
                )));
            }
        }
        Ok(positions)
    }

    /// Runs the encoder over the unmasked positions of `input`.
    ///
    /// Masked positions are excluded as attention keys, and nothing at an unmasked
    /// position depends on them, so dropping them up front gives the same result as
    /// masking their attention logits to negative infinity.
    pub fn forward(&self, input: &TokenizedInput, mode: Mode<'_>) -> Result<ForwardPass<T>, ModelError> {
        let positions = self.check_input(input)?;
        let cfg = &self.config;
        let w = &self.weights;
        let eps = T::cast(cfg.layer_norm_eps);
        let mut rng = match mode {
            Mode::Train(rng) if cfg.dropout > 0.0 => Some(rng),
            _ => None,
        };
        let m = positions.len();
        let h = cfg.hidden_size;
        let token_ids: Vec<usize> = positions.iter().map(|&i| input.token_ids[i] as usize).collect();
        let segment_ids: Vec<usize> = positions.iter().map(|&i| input.segment_ids[i] as usize).collect();

        let mut emb = Array2::<T>::zeros((m, h));
        for (r, mut row) in emb.rows_mut().into_iter().enumerate() {
            row.assign(&w.word_embeddings.row(token_ids[r]));
            row += &w.position_embeddings.row(positions[r]);
            row += &w.segment_embeddings.row(segment_ids[r]);
        }
        let (x, embed_norm) = norm_forward(&emb, &w.embedding_norm, eps);
        let embed_drop = dropout_mask((m, h), cfg.dropout, rng.as_deref_mut());
        let mut x = apply_mask(x, &embed_drop);

        let heads = cfg.num_heads;
        let dh = cfg.head_dim();
        let scale = T::cast(1.0 / (dh as f64).sqrt());
        let mut layers = Vec::with_capacity(cfg.num_layers);
        for layer in &w.layers {
            let q = dense_forward(&x, &layer.query);
            let k = dense_forward(&x, &layer.key);
            let v = dense_forward(&x, &layer.value);
            let mut context = Array2::<T>::zeros((m, h));
            let mut probs = Vec::with_capacity(heads);
            for head in 0..heads {
                let cols = s![.., head * dh..(head + 1) * dh];
                let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
                softmax_rows(&mut scores);
                context.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
                probs.push(scores);
            }
            let attn_drop = dropout_mask((m, h), cfg.dropout, rng.as_deref_mut());
            let attn_out = apply_mask(dense_forward(&context, &layer.attention_output), &attn_drop);
            let (mid, attn_norm) = norm_forward(&(&x + &attn_out), &layer.attention_norm, eps);

            let ff_pre = dense_forward(&mid, &layer.ff_in);
            let ff_act = ff_pre.mapv(gelu);
            let ff_drop = dropout_mask((m, h), cfg.dropout, rng.as_deref_mut());
            let ff_out = apply_mask(dense_forward(&ff_act, &layer.ff_out), &ff_drop);
            let (out, ff_norm) = norm_forward(&(&mid + &ff_out), &layer.ff_norm, eps);

            layers.push(LayerCache {
                input: std::mem::replace(&mut x, out),
                q,
                k,
                v,
                probs,
                context,
                attn_drop,
                attn_norm,
                mid,
                ff_pre,
                ff_act,
                ff_drop,
                ff_norm,
            });
        }

        let cls_hidden = x.slice(s![0..1, ..]).to_owned();
        let pooled = dense_forward(&cls_hidden, &w.pooler).mapv(T::tanh);
        let pooled_drop = dropout_mask((1, h), cfg.dropout, rng.as_deref_mut());
        let head_input = apply_mask(pooled.clone(), &pooled_drop);
        let logits: Vec<T> = dense_forward(&head_input, &w.head).into_iter().collect();
        let scores = logits.iter().map(|&z| clamp_unit(sigmoid(z))).collect();

        Ok(ForwardPass {
            positions,
            token_ids,
            segment_ids,
            embed_norm,
            embed_drop,
            layers,
            cls_hidden,
            pooled,
            pooled_drop,
            head_input,
            logits,
            prediction: Prediction { scores },
        })
    }

    /// Eval-mode prediction.
    pub fn predict(&self, input: &TokenizedInput) -> Result<Prediction<T>, ModelError> {
        Ok(self.forward(input, Mode::Eval)?.prediction)
    }

    /// Back-propagates `dlogits` (gradient of the loss w.r.t. the head's
    /// pre-sigmoid outputs) and accumulates weight gradients into `grads`.
    pub fn backward(&self, pass: &ForwardPass<T>, dlogits: &[T], grads: &mut ModelWeights<T>) -> Result<(), ModelError> {
        let cfg = &self.config;
        let w = &self.weights;
        if dlogits.len() != cfg.n_outputs {
            return Err(ModelError::ShapeMismatch {
                tensor: "head".into(),
                expected: vec![cfg.n_outputs],
                found: vec![dlogits.len()],
            });
        }
        let dz = Array2::from_shape_vec((1, dlogits.len()), dlogits.to_vec()).unwrap();
        let dhead_in = dense_backward(&pass.head_input, &dz, &w.head, &mut grads.head);
        let dpooled = apply_mask(dhead_in, &pass.pooled_drop);
        let dpool_pre = &dpooled * &pass.pooled.mapv(|p| T::one() - p * p);
        let dcls = dense_backward(&pass.cls_hidden, &dpool_pre, &w.pooler, &mut grads.pooler);

        let m = pass.positions.len();
        let h = cfg.hidden_size;
        let mut dx = Array2::<T>::zeros((m, h));
        dx.slice_mut(s![0..1, ..]).assign(&dcls);

        let dh = cfg.head_dim();
        let scale = T::cast(1.0 / (dh as f64).sqrt());
        for ((layer, cache), g) in w
            .layers
            .iter()
            .zip(&pass.layers)
            .zip(grads.layers.iter_mut())
            .rev()
        {
            let dres2 = norm_backward(&dx, &cache.ff_norm, &layer.ff_norm, &mut g.ff_norm);
            let dff_out = apply_mask(dres2.clone(), &cache.ff_drop);
            let dact = dense_backward(&cache.ff_act, &dff_out, &layer.ff_out, &mut g.ff_out);
            let dpre = dact * &cache.ff_pre.mapv(gelu_grad);
            let dmid = dres2 + dense_backward(&cache.mid, &dpre, &layer.ff_in, &mut g.ff_in);

            let dres1 = norm_backward(&dmid, &cache.attn_norm, &layer.attention_norm, &mut g.attention_norm);
            let dattn = apply_mask(dres1.clone(), &cache.attn_drop);
            let dctx = dense_backward(&cache.context, &dattn, &layer.attention_output, &mut g.attention_output);

            let mut dq = Array2::<T>::zeros((m, h));
            let mut dk = Array2::<T>::zeros((m, h));
            let mut dv = Array2::<T>::zeros((m, h));
            for (head, p) in cache.probs.iter().enumerate() {
                let cols = s![.., head * dh..(head + 1) * dh];
                let dctx_h = dctx.slice(cols);
                let dp = dctx_h.dot(&cache.v.slice(cols).t());
                dv.slice_mut(cols).assign(&p.t().dot(&dctx_h));
                let row_dot = (&dp * p).sum_axis(Axis(1)).insert_axis(Axis(1));
                let ds = p * &(dp - &row_dot) * scale;
                dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
                dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
            }
            let mut dinput = dres1;
            dinput += &dense_backward(&cache.input, &dq, &layer.query, &mut g.query);
            dinput += &dense_backward(&cache.input, &dk, &layer.key, &mut g.key);
            dinput += &dense_backward(&cache.input, &dv, &layer.value, &mut g.value);
            dx = dinput;
        }

        let dnormed = apply_mask(dx, &pass.embed_drop);
        let demb = norm_backward(&dnormed, &pass.embed_norm, &w.embedding_norm, &mut grads.embedding_norm);
        for (r, row) in demb.rows().into_iter().enumerate() {
            let mut word = grads.word_embeddings.row_mut(pass.token_ids[r]);
            word += &row;
            let mut pos = grads.position_embeddings.row_mut(pass.positions[r]);
            pos += &row;
            let mut seg = grads.segment_embeddings.row_mut(pass.segment_ids[r]);
            seg += &row;
        }
        Ok(())
    }

    /// Loss and weight gradients of the mean binary cross-entropy over the
    /// outputs of one example.
    pub fn loss_and_gradients(
        &self,
        input: &TokenizedInput,
        target: &[T],
        mode: Mode<'_>,
    ) -> Result<(T, ModelWeights<T>), ModelError> {
        let pass = self.forward(input, mode)?;
        let (loss, dlogits) = bce_with_logit_grad(&pass.prediction.scores, target)?;
        let mut grads = ModelWeights::zeros(&self.config);
        self.backward(&pass, &dlogits, &mut grads)?;
        Ok((loss, grads))
    }
}

/// Smallest probability fed to the logarithms of the cross-entropy.
pub const BCE_CLAMP: f64 = 1e-7;

/// Mean soft-label binary cross-entropy of one example and its gradient with
/// respect to the pre-sigmoid logits, `(p - t) / n`.
pub fn bce_with_logit_grad<T: Real>(p: &[T], t: &[T]) -> Result<(T, Vec<T>), ModelError> {
    if p.len() != t.len() {
        return Err(ModelError::ShapeMismatch {
            tensor: "targets".into(),
            expected: vec![p.len()],
            found: vec![t.len()],
        });
    }
    let n = T::cast(p.len() as f64);
    let lo = T::cast(BCE_CLAMP);
    let hi = T::one() - lo;
    let loss = p
        .iter()
        .zip(t)
        .map(|(&p, &t)| {
            let p = p.max(lo).min(hi);
            -(t * p.ln() + (T::one() - t) * (T::one() - p).ln())
        })
        .sum::<T>()
        / n;
    let grad = p.iter().zip(t).map(|(&p, &t)| (p - t) / n).collect();
    Ok((loss, grad))
}

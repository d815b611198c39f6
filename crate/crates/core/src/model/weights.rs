use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelConfig, ModelError, Real};

/// Standard deviation of the initial weight distribution.
pub const INIT_STD: f64 = 0.02;

/// Role of a tensor, which fixes its initial values and whether weight decay applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Embedding,
    Kernel,
    Bias,
    NormScale,
    NormShift,
}

impl TensorKind {
    pub fn decays(self) -> bool {
        matches!(self, TensorKind::Embedding | TensorKind::Kernel)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: TensorKind,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Every tensor the config implies, in canonical order.
pub fn tensor_specs(cfg: &ModelConfig) -> Vec<TensorSpec> {
    let h = cfg.hidden_size;
    let mut specs = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, kind| specs.push(TensorSpec { name, shape, kind });
    push("embeddings.word".into(), vec![cfg.vocab_size, h], TensorKind::Embedding);
    push("embeddings.position".into(), vec![cfg.max_positions, h], TensorKind::Embedding);
    push("embeddings.segment".into(), vec![cfg.type_vocab_size, h], TensorKind::Embedding);
    push("embeddings.norm.gamma".into(), vec![h], TensorKind::NormScale);
    push("embeddings.norm.beta".into(), vec![h], TensorKind::NormShift);
    for l in 0..cfg.num_layers {
        let p = format!("layers.{l}");
        for (name, inp, out) in [
            ("attention.query", h, h),
            ("attention.key", h, h),
            ("attention.value", h, h),
            ("attention.output", h, h),
        ] {
            push(format!("{p}.{name}.weight"), vec![inp, out], TensorKind::Kernel);
            push(format!("{p}.{name}.bias"), vec![out], TensorKind::Bias);
        }
        push(format!("{p}.attention.norm.gamma"), vec![h], TensorKind::NormScale);
        push(format!("{p}.attention.norm.beta"), vec![h], TensorKind::NormShift);
        push(format!("{p}.ff.in.weight"), vec![h, cfg.ff_size], TensorKind::Kernel);
        push(format!("{p}.ff.in.bias"), vec![cfg.ff_size], TensorKind::Bias);
        push(format!("{p}.ff.out.weight"), vec![cfg.ff_size, h], TensorKind::Kernel);
        push(format!("{p}.ff.out.bias"), vec![h], TensorKind::Bias);
        push(format!("{p}.ff.norm.gamma"), vec![h], TensorKind::NormScale);
        push(format!("{p}.ff.norm.beta"), vec![h], TensorKind::NormShift);
    }
    push("pooler.weight".into(), vec![h, h], TensorKind::Kernel);
    push("pooler.bias".into(), vec![h], TensorKind::Bias);
    push("head.weight".into(), vec![h, cfg.n_outputs], TensorKind::Kernel);
    push("head.bias".into(), vec![cfg.n_outputs], TensorKind::Bias);
    specs
}

/// `y = x · weight + bias`, with `weight` shaped (inputs, outputs).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<T> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer<T> {
    pub query: Dense<T>,
    pub key: Dense<T>,
    pub value: Dense<T>,
    pub attention_output: Dense<T>,
    pub attention_norm: LayerNorm<T>,
    pub ff_in: Dense<T>,
    pub ff_out: Dense<T>,
    pub ff_norm: LayerNorm<T>,
}

/// All encoder parameters. Gradients and optimizer moments use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T> {
    pub word_embeddings: Array2<T>,
    pub position_embeddings: Array2<T>,
    pub segment_embeddings: Array2<T>,
    pub embedding_norm: LayerNorm<T>,
    pub layers: Vec<EncoderLayer<T>>,
    pub pooler: Dense<T>,
    pub head: Dense<T>,
}

struct Flat<T> {
    tensors: std::vec::IntoIter<(TensorSpec, Vec<T>)>,
}

impl<T: Real> Flat<T> {
    fn next(&mut self) -> (TensorSpec, Vec<T>) {
        self.tensors.next().expect("tensor list follows tensor_specs")
    }

    fn matrix(&mut self) -> Array2<T> {
        let (spec, data) = self.next();
        Array2::from_shape_vec((spec.shape[0], spec.shape[1]), data).expect("length checked")
    }

    fn vector(&mut self) -> Array1<T> {
        Array1::from_vec(self.next().1)
    }

    fn dense(&mut self) -> Dense<T> {
        Dense {
            weight: self.matrix(),
            bias: self.vector(),
        }
    }

    fn norm(&mut self) -> LayerNorm<T> {
        LayerNorm {
            gamma: self.vector(),
            beta: self.vector(),
        }
    }
}

impl<T: Real> ModelWeights<T> {
    /// Assembles weights from flat tensors given in [`tensor_specs`] order.
    pub fn from_flat(cfg: &ModelConfig, tensors: Vec<Vec<T>>) -> Result<Self, ModelError> {
        let specs = tensor_specs(cfg);
        if tensors.len() != specs.len() {
            return Err(ModelError::CorruptArchive(format!(
                "expected {} tensors, found {}",
                specs.len(),
                tensors.len()
            )));
        }
        for (spec, t) in specs.iter().zip(&tensors) {
            if t.len() != spec.numel() {
                return Err(ModelError::ShapeMismatch {
                    tensor: spec.name.clone(),
                    expected: spec.shape.clone(),
                    found: vec![t.len()],
                });
            }
        }
        let mut flat = Flat {
            tensors: specs.into_iter().zip(tensors).collect::<Vec<_>>().into_iter(),
        };
        let word_embeddings = flat.matrix();
        let position_embeddings = flat.matrix();
        let segment_embeddings = flat.matrix();
        let embedding_norm = flat.norm();
        let layers = (0..cfg.num_layers)
            .map(|_| EncoderLayer {
                query: flat.dense(),
                key: flat.dense(),
                value: flat.dense(),
                attention_output: flat.dense(),
                attention_norm: flat.norm(),
                ff_in: flat.dense(),
                ff_out: flat.dense(),
                ff_norm: flat.norm(),
            })
            .collect();
        Ok(ModelWeights {
            word_embeddings,
            position_embeddings,
            segment_embeddings,
            embedding_norm,
            layers,
            pooler: flat.dense(),
            head: flat.dense(),
        })
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        let tensors = tensor_specs(cfg)
            .iter()
            .map(|s| vec![T::zero(); s.numel()])
            .collect();
        Self::from_flat(cfg, tensors).expect("shapes come from the config")
    }

    pub(super) fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).unwrap();
        let tensors = tensor_specs(cfg)
            .iter()
            .map(|s| match s.kind {
                TensorKind::Embedding | TensorKind::Kernel => (0..s.numel())
                    .map(|_| loop {
                        let v: f64 = normal.sample(&mut rng);
                        if v.abs() <= 2.0 * INIT_STD {
                            break T::cast(v);
                        }
                    })
                    .collect(),
                TensorKind::NormScale => vec![T::one(); s.numel()],
                TensorKind::Bias | TensorKind::NormShift => vec![T::zero(); s.numel()],
            })
            .collect();
        Self::from_flat(cfg, tensors).expect("shapes come from the config")
    }

    /// Tensors as (name, shape, values) in [`tensor_specs`] order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        tensor_specs_for(self)
            .into_iter()
            .zip(self.slices())
            .map(|((name, shape), data)| (name, shape, data))
            .collect()
    }

    fn slices(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = vec![
            self.word_embeddings.as_slice().unwrap(),
            self.position_embeddings.as_slice().unwrap(),
            self.segment_embeddings.as_slice().unwrap(),
            self.embedding_norm.gamma.as_slice().unwrap(),
            self.embedding_norm.beta.as_slice().unwrap(),
        ];
        for l in &self.layers {
            for d in [&l.query, &l.key, &l.value, &l.attention_output] {
                out.push(d.weight.as_slice().unwrap());
                out.push(d.bias.as_slice().unwrap());
            }
            out.push(l.attention_norm.gamma.as_slice().unwrap());
            out.push(l.attention_norm.beta.as_slice().unwrap());
            for d in [&l.ff_in, &l.ff_out] {
                out.push(d.weight.as_slice().unwrap());
                out.push(d.bias.as_slice().unwrap());
            }
            out.push(l.ff_norm.gamma.as_slice().unwrap());
            out.push(l.ff_norm.beta.as_slice().unwrap());
        }
        for d in [&self.pooler, &self.head] {
            out.push(d.weight.as_slice().unwrap());
            out.push(d.bias.as_slice().unwrap());
        }
        out
    }

    /// Mutable flat views in [`tensor_specs`] order.
    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = vec![
            self.word_embeddings.as_slice_mut().unwrap(),
            self.position_embeddings.as_slice_mut().unwrap(),
            self.segment_embeddings.as_slice_mut().unwrap(),
            self.embedding_norm.gamma.as_slice_mut().unwrap(),
            self.embedding_norm.beta.as_slice_mut().unwrap(),
        ];
        for l in &mut self.layers {
            for d in [&mut l.query, &mut l.key, &mut l.value, &mut l.attention_output] {
                out.push(d.weight.as_slice_mut().unwrap());
                out.push(d.bias.as_slice_mut().unwrap());
            }
            out.push(l.attention_norm.gamma.as_slice_mut().unwrap());
            out.push(l.attention_norm.beta.as_slice_mut().unwrap());
            for d in [&mut l.ff_in, &mut l.ff_out] {
                out.push(d.weight.as_slice_mut().unwrap());
                out.push(d.bias.as_slice_mut().unwrap());
            }
            out.push(l.ff_norm.gamma.as_slice_mut().unwrap());
            out.push(l.ff_norm.beta.as_slice_mut().unwrap());
        }
        for d in [&mut self.pooler, &mut self.head] {
            out.push(d.weight.as_slice_mut().unwrap());
            out.push(d.bias.as_slice_mut().unwrap());
        }
        out
    }

    /// Flat immutable views in [`tensor_specs`] order.
    pub fn tensors(&self) -> Vec<&[T]> {
        self.slices()
    }

    /// Every scalar, tensor by tensor.
    pub fn flat_values(&self) -> impl Iterator<Item = T> + '_ {
        self.slices().into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn parameter_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// Verifies every tensor shape against the config, naming the first mismatch.
    pub fn audit(&self, cfg: &ModelConfig) -> Result<(), ModelError> {
        let specs = tensor_specs(cfg);
        let actual = tensor_specs_for(self);
        if specs.len() != actual.len() {
            return Err(ModelError::ShapeMismatch {
                tensor: "layers".into(),
                expected: vec![cfg.num_layers],
                found: vec![self.layers.len()],
            });
        }
        for (spec, (_, shape)) in specs.iter().zip(actual) {
            if spec.shape != shape {
                return Err(ModelError::ShapeMismatch {
                    tensor: spec.name.clone(),
                    expected: spec.shape.clone(),
                    found: shape,
                });
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ModelWeights<U> {
        let conv1 = |a: &Array1<T>| a.mapv(|v| U::cast(v.to_f64().unwrap()));
        let conv2 = |a: &Array2<T>| a.mapv(|v| U::cast(v.to_f64().unwrap()));
        let dense = |d: &Dense<T>| Dense {
            weight: conv2(&d.weight),
            bias: conv1(&d.bias),
        };
        let norm = |n: &LayerNorm<T>| LayerNorm {
            gamma: conv1(&n.gamma),
            beta: conv1(&n.beta),
        };
        ModelWeights {
            word_embeddings: conv2(&self.word_embeddings),
            position_embeddings: conv2(&self.position_embeddings),
            segment_embeddings: conv2(&self.segment_embeddings),
            embedding_norm: norm(&self.embedding_norm),
            layers: self
                .layers
                .iter()
                .map(|l| EncoderLayer {
                    query: dense(&l.query),
                    key: dense(&l.key),
                    value: dense(&l.value),
                    attention_output: dense(&l.attention_output),
                    attention_norm: norm(&l.attention_norm),
                    ff_in: dense(&l.ff_in),
                    ff_out: dense(&l.ff_out),
                    ff_norm: norm(&l.ff_norm),
                })
                .collect(),
            pooler: dense(&self.pooler),
            head: dense(&self.head),
        }
    }

    /// `self += other`, element-wise.
    pub fn add_assign(&mut self, other: &ModelWeights<T>) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in self.tensors_mut() {
            for v in t {
                *v *= factor;
            }
        }
    }
}

/// Names and actual shapes of a weight set, in canonical order.
fn tensor_specs_for<T>(w: &ModelWeights<T>) -> Vec<(String, Vec<usize>)> {
    let mut out = vec![
        ("embeddings.word".to_string(), w.word_embeddings.shape().to_vec()),
        ("embeddings.position".to_string(), w.position_embeddings.shape().to_vec()),
        ("embeddings.segment".to_string(), w.segment_embeddings.shape().to_vec()),
        ("embeddings.norm.gamma".to_string(), w.embedding_norm.gamma.shape().to_vec()),
        ("embeddings.norm.beta".to_string(), w.embedding_norm.beta.shape().to_vec()),
    ];
    for (i, l) in w.layers.iter().enumerate() {
        let p = format!("layers.{i}");
        for (name, d) in [
            ("attention.query", &l.query),
            ("attention.key", &l.key),
            ("attention.value", &l.value),
            ("attention.output", &l.attention_output),
        ] {
            out.push((format!("{p}.{name}.weight"), d.weight.shape().to_vec()));
            out.push((format!("{p}.{name}.bias"), d.bias.shape().to_vec()));
        }
        out.push((format!("{p}.attention.norm.gamma"), l.attention_norm.gamma.shape().to_vec()));
        out.push((format!("{p}.attention.norm.beta"), l.attention_norm.beta.shape().to_vec()));
        for (name, d) in [("ff.in", &l.ff_in), ("ff.out", &l.ff_out)] {
            out.push((format!("{p}.{name}.weight"), d.weight.shape().to_vec()));
            out.push((format!("{p}.{name}.bias"), d.bias.shape().to_vec()));
        }
        out.push((format!("{p}.ff.norm.gamma"), l.ff_norm.gamma.shape().to_vec()));
        out.push((format!("{p}.ff.norm.beta"), l.ff_norm.beta.shape().to_vec()));
    }
    for (name, d) in [("pooler", &w.pooler), ("head", &w.head)] {
        out.push((format!("{name}.weight"), d.weight.shape().to_vec()));
        out.push((format!("{name}.bias"), d.bias.shape().to_vec()));
    }
    out
}

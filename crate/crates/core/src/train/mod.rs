//! Target preprocessing, loss, the optimization loop and the learning-rate sweep.

mod optim;
mod transform;

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use optim::{adam_step, adam_update, AdamState, OptimizerConfig};
pub use transform::{fit_target_transform, ColumnTransform, TargetTransform};

use crate::corpus::{make_split, Corpus, CorpusError, Fold, SplitPlan, TARGET_COUNT};
use crate::model::{Mode, Model, ModelConfig, ModelError, ModelWeights, BCE_CLAMP};
use crate::tokenizer::{encode_pair, TokenizedInput, Vocabulary};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("target transform used before fitting")]
    NotFitted,
    #[error("need at least 2 rows to fit a target transform, got {0}")]
    TooFewRows(usize),
    #[error("non-finite target value {0}")]
    NonFinite(f64),
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Learning rates tried by a default sweep.
pub const DEFAULT_LR_GRID: [f64; 5] = [1e-5, 3e-5, 5e-5, 7e-5, 9e-5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_len: usize,
    pub split: SplitPlan,
    /// Which (train, validation) pair of the split to use.
    pub fold: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    /// Also report validation MSE on the original target scale.
    pub raw_scale_mse: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-5,
            epochs: 5,
            batch_size: 6,
            max_len: 512,
            split: SplitPlan::default(),
            fold: 0,
            seed: 0,
            optimizer: OptimizerConfig::default(),
            raw_scale_mse: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(1e-6..=1e-2).contains(&self.learning_rate) {
            return bad(format!("learning rate {} outside [1e-6, 1e-2]", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.max_len < 3 {
            return bad(format!("max_len {} leaves no room for special tokens", self.max_len));
        }
        if self.fold >= self.split.n_pairs() {
            return bad(format!("fold {} but the split has {} pairs", self.fold, self.split.n_pairs()));
        }
        let o = &self.optimizer;
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || o.epsilon <= 0.0 || o.weight_decay < 0.0 {
            return bad(format!("bad optimizer settings {o:?}"));
        }
        Ok(())
    }
}

fn check_shapes<R: AsRef<[f64]>>(p: &[R], t: &[R]) -> Result<usize, TrainError> {
    let shape = |m: &[R]| vec![m.len(), m.first().map_or(0, |r| r.as_ref().len())];
    if p.len() != t.len()
        || p.iter().zip(t).any(|(a, b)| a.as_ref().len() != b.as_ref().len())
        || p.iter().any(|r| r.as_ref().len() != p[0].as_ref().len())
    {
        return Err(TrainError::ShapeMismatch {
            expected: shape(t),
            found: shape(p),
        });
    }
    Ok(p.iter().map(|r| r.as_ref().len()).sum())
}

/// Mean soft-label binary cross-entropy over every entry.
pub fn bce_loss<R: AsRef<[f64]>>(predictions: &[R], targets: &[R]) -> Result<f64, TrainError> {
    let n = check_shapes(predictions, targets)?;
    let mut total = 0.0;
    for (p, t) in predictions.iter().zip(targets) {
        for (&p, &t) in p.as_ref().iter().zip(t.as_ref()) {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            total -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        }
    }
    Ok(total / n as f64)
}

/// Mean squared error over every entry.
pub fn mse<R: AsRef<[f64]>>(predictions: &[R], targets: &[R]) -> Result<f64, TrainError> {
    let n = check_shapes(predictions, targets)?;
    let total: f64 = predictions
        .iter()
        .zip(targets)
        .flat_map(|(p, t)| p.as_ref().iter().zip(t.as_ref()).map(|(a, b)| (a - b) * (a - b)))
        .sum();
    Ok(total / n as f64)
}

/// One encoded row with its transformed targets.
#[derive(Debug, Clone)]
pub struct Example {
    pub input: TokenizedInput,
    pub target: Vec<f32>,
}

/// Mean loss and gradient over a batch. Per-example dropout generators are
/// seeded in order from `rng`, and gradients are summed in batch order.
pub fn batch_gradients(
    model: &Model<f32>,
    batch: &[&Example],
    rng: &mut ChaCha8Rng,
) -> Result<(f64, ModelWeights<f32>), TrainError> {
    let mut grads = ModelWeights::zeros(model.config());
    let mut loss = 0.0;
    for ex in batch {
        let mut drop_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        let (l, g) = model.loss_and_gradients(&ex.input, &ex.target, Mode::Train(&mut drop_rng))?;
        loss += l as f64;
        grads.add_assign(&g);
    }
    let scale = 1.0 / batch.len() as f32;
    grads.scale(scale);
    Ok((loss / batch.len() as f64, grads))
}

/// Encodes rows in parallel, keeping row order.
pub fn encode_rows(corpus: &Corpus, rows: &[usize], vocab: &Vocabulary, max_len: usize) -> Vec<TokenizedInput> {
    rows.par_iter()
        .map(|&i| {
            let r = &corpus.records()[i];
            encode_pair(&r.title, &r.body, vocab, max_len)
        })
        .collect()
}

fn raw_targets(corpus: &Corpus, rows: &[usize]) -> Vec<[f64; TARGET_COUNT]> {
    rows.iter().map(|&i| *corpus.targets()[i].values()).collect()
}

/// Eval-mode predictions for already encoded inputs.
pub fn predict_all(model: &Model<f32>, inputs: &[TokenizedInput]) -> Result<Vec<Vec<f64>>, TrainError> {
    inputs
        .par_iter()
        .map(|x| Ok(model.predict(x)?.scores.iter().map(|&s| s as f64).collect()))
        .collect()
}

fn check_compat(corpus: &Corpus, vocab: &Vocabulary, model_config: &ModelConfig, cfg: &TrainConfig) -> Result<(), TrainError> {
    cfg.validate()?;
    model_config.validate()?;
    if vocab.len() > model_config.vocab_size {
        return Err(TrainError::InvalidConfig(format!(
            "vocabulary has {} tokens but the model embeds {}",
            vocab.len(),
            model_config.vocab_size
        )));
    }
    if cfg.max_len > model_config.max_positions {
        return Err(TrainError::InvalidConfig(format!(
            "max_len {} exceeds the model's {} positions",
            cfg.max_len, model_config.max_positions
        )));
    }
    if corpus.len() < 2 {
        return Err(TrainError::TooFewRows(corpus.len()));
    }
    Ok(())
}

/// Resolves the configured (train, validation) pair.
pub fn select_fold(corpus: &Corpus, cfg: &TrainConfig) -> Result<Fold, TrainError> {
    let mut folds = make_split(corpus, &cfg.split)?;
    if cfg.fold >= folds.len() {
        return Err(TrainError::InvalidConfig(format!("fold {} of {}", cfg.fold, folds.len())));
    }
    Ok(folds.swap_remove(cfg.fold))
}

/// Result of one training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model<f32>,
    pub transform: TargetTransform,
    pub fold: Fold,
    pub train_loss: Vec<f64>,
    pub validation_mse: Vec<f64>,
    pub raw_validation_mse: Option<Vec<f64>>,
    pub epoch_seconds: Vec<f64>,
    /// Optimizer steps taken.
    pub steps: u64,
}

/// Validation data on both target scales.
struct Validation {
    inputs: Vec<TokenizedInput>,
    targets: Vec<Vec<f64>>,
    raw: Vec<Vec<f64>>,
}

impl Validation {
    fn mse(&self, model: &Model<f32>, transform: &TargetTransform, raw_scale: bool) -> Result<(f64, Option<f64>), TrainError> {
        let preds = predict_all(model, &self.inputs)?;
        let scaled = mse(&preds, &self.targets)?;
        let raw = if raw_scale {
            let back = preds.iter().map(|p| transform.invert(p)).collect::<Result<Vec<_>, _>>()?;
            Some(mse(&back, &self.raw)?)
        } else {
            None
        };
        Ok((scaled, raw))
    }
}

fn prepare(
    corpus: &Corpus,
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    fold: &Fold,
) -> Result<(TargetTransform, Vec<Example>, Validation), TrainError> {
    let train_raw = raw_targets(corpus, &fold.train);
    let transform = fit_target_transform(&train_raw)?;
    let train_inputs = encode_rows(corpus, &fold.train, vocab, cfg.max_len);
    let examples = train_inputs
        .into_iter()
        .zip(&train_raw)
        .map(|(input, t)| {
            let target = transform.apply(t)?.iter().map(|&v| v as f32).collect();
            Ok(Example { input, target })
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    let raw: Vec<Vec<f64>> = raw_targets(corpus, &fold.validation).iter().map(|r| r.to_vec()).collect();
    let targets = raw.iter().map(|r| transform.apply(r)).collect::<Result<Vec<_>, _>>()?;
    let validation = Validation {
        inputs: encode_rows(corpus, &fold.validation, vocab, cfg.max_len),
        targets,
        raw,
    };
    Ok((transform, examples, validation))
}

/// Trains a freshly initialized model on the configured split.
///
/// The target transform is fitted on the training rows only. Training rows are
/// reshuffled every epoch, the last short batch is kept, and validation MSE is
/// measured in eval mode on the transformed scale after each epoch.
pub fn train_run(
    corpus: &Corpus,
    vocab: &Vocabulary,
    model_config: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    check_compat(corpus, vocab, model_config, cfg)?;
    let fold = select_fold(corpus, cfg)?;
    if fold.train.len() < 2 {
        return Err(TrainError::TooFewRows(fold.train.len()));
    }
    let (transform, examples, validation) = prepare(corpus, vocab, cfg, &fold)?;
    let mut model = Model::<f32>::init(model_config.clone(), cfg.seed)?;
    let mut state = AdamState::new(model_config);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e);
    let mut order: Vec<usize> = (0..examples.len()).collect();

    let mut outcome = TrainOutcome {
        model: model.clone(),
        transform: transform.clone(),
        fold: fold.clone(),
        train_loss: Vec::new(),
        validation_mse: Vec::new(),
        raw_validation_mse: cfg.raw_scale_mse.then(Vec::new),
        epoch_seconds: Vec::new(),
        steps: 0,
    };

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let (loss, grads) = batch_gradients(&model, &batch, &mut rng)?;
            adam_step(model.weights_mut(), &grads, &mut state, cfg.learning_rate, &cfg.optimizer)?;
            loss_sum += loss;
            batches += 1;
        }
        let (val, raw) = if validation.inputs.is_empty() {
            (f64::NAN, cfg.raw_scale_mse.then_some(f64::NAN))
        } else {
            validation.mse(&model, &transform, cfg.raw_scale_mse)?
        };
        let secs = start.elapsed().as_secs_f64();
        log::info!(
            "epoch {}/{}: train loss {:.5}, validation mse {:.5} ({secs:.1}s)",
            epoch + 1,
            cfg.epochs,
            loss_sum / batches as f64,
            val
        );
        outcome.train_loss.push(loss_sum / batches as f64);
        outcome.validation_mse.push(val);
        if let (Some(list), Some(r)) = (outcome.raw_validation_mse.as_mut(), raw) {
            list.push(r);
        }
        outcome.epoch_seconds.push(secs);
    }
    outcome.model = model;
    outcome.steps = state.step();
    Ok(outcome)
}

/// Validation MSE of a trained model on the configured split, with the target
/// transform refitted on that split's training rows.
pub fn evaluate(corpus: &Corpus, vocab: &Vocabulary, model: &Model<f32>, cfg: &TrainConfig) -> Result<f64, TrainError> {
    check_compat(corpus, vocab, model.config(), cfg)?;
    let fold = select_fold(corpus, cfg)?;
    let transform = fit_target_transform(&raw_targets(corpus, &fold.train))?;
    let inputs = encode_rows(corpus, &fold.validation, vocab, cfg.max_len);
    let targets = raw_targets(corpus, &fold.validation)
        .iter()
        .map(|r| transform.apply(r))
        .collect::<Result<Vec<_>, _>>()?;
    mse(&predict_all(model, &inputs)?, &targets)
}

/// Mean squared error of predicting the training-set mean of each transformed target.
pub fn constant_mean_baseline(corpus: &Corpus, cfg: &TrainConfig) -> Result<f64, TrainError> {
    let fold = select_fold(corpus, cfg)?;
    let transform = fit_target_transform(&raw_targets(corpus, &fold.train))?;
    let scaled = |rows: &[usize]| -> Result<Vec<Vec<f64>>, TrainError> {
        raw_targets(corpus, rows).iter().map(|r| transform.apply(r)).collect()
    };
    let train = scaled(&fold.train)?;
    let mut mean = vec![0.0; TARGET_COUNT];
    for r in &train {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / train.len() as f64;
        }
    }
    let val = scaled(&fold.validation)?;
    let preds = vec![mean; val.len()];
    mse(&preds, &val)
}

/// One training run per fold of the configured split.
pub fn cross_validate(
    corpus: &Corpus,
    vocab: &Vocabulary,
    model_config: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<Vec<TrainOutcome>, TrainError> {
    (0..cfg.split.n_pairs())
        .map(|fold| {
            let cfg = TrainConfig { fold, ..cfg.clone() };
            train_run(corpus, vocab, model_config, &cfg)
        })
        .collect()
}

/// Validation MSE indexed by learning rate and epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub learning_rates: Vec<f64>,
    pub epochs: usize,
    /// One row per learning rate, one column per epoch.
    pub mse: Vec<Vec<f64>>,
}

impl EvalGrid {
    pub fn get(&self, lr_index: usize, epoch: usize) -> Option<f64> {
        self.mse.get(lr_index)?.get(epoch.checked_sub(1)?).copied()
    }

    /// Lowest cell as `(learning rate, epoch, mse)`, epochs counted from 1.
    pub fn best(&self) -> Option<(f64, usize, f64)> {
        let mut best: Option<(f64, usize, f64)> = None;
        for (lr, row) in self.learning_rates.iter().zip(&self.mse) {
            for (e, &v) in row.iter().enumerate() {
                if !v.is_nan() && best.map_or(true, |b| v < b.2) {
                    best = Some((*lr, e + 1, v));
                }
            }
        }
        best
    }

    /// Epochs down, learning rates across.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch");
        for lr in &self.learning_rates {
            s.push_str(&format!(",{lr:e}"));
        }
        s.push('\n');
        for e in 0..self.epochs {
            s.push_str(&(e + 1).to_string());
            for row in &self.mse {
                s.push_str(&format!(",{}", row[e]));
            }
            s.push('\n');
        }
        s
    }

    /// Writes `sweep_grid.csv` and `sweep_grid.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), TrainError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sweep_grid.csv"), self.to_csv())?;
        std::fs::write(dir.join("sweep_grid.json"), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Everything needed to reproduce or audit a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub seed: u64,
    pub corpus_source: String,
    pub corpus_fingerprint: String,
    pub corpus_rows: usize,
    pub train_rows: usize,
    pub validation_rows: usize,
    pub degenerate_columns: Vec<usize>,
    pub train_loss: Vec<f64>,
    pub validation_mse: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_validation_mse: Option<Vec<f64>>,
    pub epoch_seconds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub archive_fingerprint: Option<String>,
}

impl RunManifest {
    pub fn new(corpus: &Corpus, model_config: &ModelConfig, cfg: &TrainConfig, outcome: &TrainOutcome) -> Self {
        RunManifest {
            model_config: model_config.clone(),
            train_config: cfg.clone(),
            seed: cfg.seed,
            corpus_source: corpus.provenance().source.display().to_string(),
            corpus_fingerprint: corpus.provenance().fingerprint.clone(),
            corpus_rows: corpus.len(),
            train_rows: outcome.fold.train.len(),
            validation_rows: outcome.fold.validation.len(),
            degenerate_columns: outcome.transform.degenerate_columns(),
            train_loss: outcome.train_loss.clone(),
            validation_mse: outcome.validation_mse.clone(),
            raw_validation_mse: outcome.raw_validation_mse.clone(),
            epoch_seconds: outcome.epoch_seconds.clone(),
            archive_fingerprint: None,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Grid plus the manifest of each run, in learning-rate order.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub grid: EvalGrid,
    pub manifests: Vec<RunManifest>,
}

/// Trains once per learning rate with the same seed and split. Runs are
/// independent and may execute in parallel; results are collected in input order.
pub fn lr_sweep(
    corpus: &Corpus,
    vocab: &Vocabulary,
    model_config: &ModelConfig,
    base: &TrainConfig,
    learning_rates: &[f64],
) -> Result<SweepOutcome, TrainError> {
    if learning_rates.is_empty() {
        return Err(TrainError::InvalidConfig("empty learning-rate grid".into()));
    }
    let manifests = learning_rates
        .par_iter()
        .map(|&lr| {
            let cfg = TrainConfig {
                learning_rate: lr,
                ..base.clone()
            };
            let outcome = train_run(corpus, vocab, model_config, &cfg)?;
            Ok(RunManifest::new(corpus, model_config, &cfg, &outcome))
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    let grid = EvalGrid {
        learning_rates: learning_rates.to_vec(),
        epochs: base.epochs,
        mse: manifests.iter().map(|m| m.validation_mse.clone()).collect(),
    };
    Ok(SweepOutcome { grid, manifests })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_identities() {
        let half = vec![vec![0.5; 20]];
        assert!((bce_loss(&half, &half).unwrap() - std::f64::consts::LN_2).abs() < 1e-9);
        let one = vec![vec![1.0; 20]];
        assert!(bce_loss(&one, &one).unwrap() < 1e-6);
        let short = vec![vec![0.5; 19]];
        assert!(matches!(bce_loss(&half, &short), Err(TrainError::ShapeMismatch { .. })));
    }

    #[test]
    fn mse_identities() {
        let x = vec![vec![0.1, 0.7], vec![0.3, 0.2]];
        assert_eq!(mse(&x, &x).unwrap(), 0.0);
        let y = vec![vec![0.1, 0.7], vec![0.3, 0.4]];
        assert!((mse(&x, &y).unwrap() - 0.01).abs() < 1e-15);
        assert!(matches!(mse(&x, &y[..1]), Err(TrainError::ShapeMismatch { .. })));
    }

    #[test]
    fn config_sanity_band() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.learning_rate = 0.1;
        assert!(matches!(c.validate(), Err(TrainError::InvalidConfig(_))));
        c.learning_rate = 1e-3;
        c.fold = 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn grid_csv_shape() {
        let g = EvalGrid {
            learning_rates: vec![1e-5, 3e-5],
            epochs: 2,
            mse: vec![vec![0.1, 0.2], vec![0.3, 0.05]],
        };
        assert_eq!(g.to_csv(), "epoch,1e-5,3e-5\n1,0.1,0.3\n2,0.2,0.05\n");
        assert_eq!(g.best(), Some((3e-5, 2, 0.05)));
        assert_eq!(g.get(0, 2), Some(0.2));
        assert_eq!(g.get(0, 0), None);
    }
}

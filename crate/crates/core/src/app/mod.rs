//! Command implementations behind the `qscore` binary, plus the HTTP service.

pub mod serve;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::corpus::{load_corpus, ColumnPolicy, Corpus, TARGET_NAMES};
use crate::model::{archive_fingerprint, write_archive, Model, ModelConfig};
use crate::sentiment::{load_lexicon, sentiment_report, SentimentLexicon};
use crate::textfeat::{correlation_matrix, histogram_targets, write_report, Axis};
use crate::tokenizer::{encode_pair, load_vocab, Vocabulary};
use crate::train::{evaluate, lr_sweep, train_run, EvalGrid, RunManifest, TrainConfig, DEFAULT_LR_GRID};

/// Everything a command needs. Read from JSON; missing fields take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub corpus: Option<PathBuf>,
    /// Newline-delimited WordPiece vocabulary. Training builds one from the
    /// corpus when this is unset.
    pub vocab: Option<PathBuf>,
    /// Sentiment lexicon; the bundled one is used when unset.
    pub lexicon: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub preset: String,
    pub column_policy: ColumnPolicy,
    pub train: TrainConfig,
    pub learning_rates: Vec<f64>,
    pub address: String,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            corpus: None,
            vocab: None,
            lexicon: None,
            weights: None,
            output_dir: PathBuf::from("qscore-out"),
            preset: "tiny".into(),
            column_policy: ColumnPolicy::Strict,
            train: TrainConfig::default(),
            learning_rates: DEFAULT_LR_GRID.to_vec(),
            address: "127.0.0.1:8080".into(),
        }
    }
}

impl AppConfig {
    /// Reads a JSON config file. Fields it omits keep their defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn corpus_path(&self) -> Result<&Path> {
        existing(self.corpus.as_deref(), "corpus")
    }

    pub fn vocab_path(&self) -> Result<&Path> {
        existing(self.vocab.as_deref(), "vocab")
    }

    pub fn weights_path(&self) -> Result<&Path> {
        existing(self.weights.as_deref(), "weights")
    }

    fn check_optional(&self) -> Result<()> {
        if let Some(p) = &self.vocab {
            existing(Some(p), "vocab")?;
        }
        if let Some(p) = &self.lexicon {
            existing(Some(p), "lexicon")?;
        }
        Ok(())
    }

    /// Model shape for the chosen preset, sized for `vocab` and the configured `max_len`.
    pub fn model_config(&self, vocab: &Vocabulary) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::preset(&self.preset)
            .with_context(|| format!("unknown preset `{}` (expected tiny or base)", self.preset))?;
        cfg.vocab_size = if self.preset == "base" {
            cfg.vocab_size.max(vocab.len())
        } else {
            vocab.len()
        };
        cfg.max_positions = cfg.max_positions.max(self.train.max_len);
        Ok(cfg)
    }

    pub fn load_corpus(&self) -> Result<Corpus> {
        let path = self.corpus_path()?;
        let corpus = load_corpus(path, self.column_policy).with_context(|| format!("loading {}", path.display()))?;
        let r = corpus.report();
        log::info!("loaded {} rows from {} ({} skipped)", r.loaded, path.display(), r.skipped);
        Ok(corpus)
    }
}

fn existing<'a>(path: Option<&'a Path>, what: &str) -> Result<&'a Path> {
    let Some(p) = path else {
        bail!("no {what} path configured");
    };
    if !p.exists() {
        bail!("{what} file {} does not exist", p.display());
    }
    Ok(p)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Headline numbers written to `eda_summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdaSummary {
    pub source: String,
    pub fingerprint: String,
    pub rows: usize,
    pub skipped_rows: usize,
    pub empty_titles: usize,
    pub empty_bodies: usize,
    pub target_means: BTreeMap<String, f64>,
    pub undefined_target_correlations: usize,
    pub undefined_feature_correlations: usize,
    pub mean_polarity: f64,
    pub mean_subjectivity: f64,
    pub files: Vec<String>,
}

/// Target histograms, correlation tables, the sentiment scatter and a summary, all under `<output_dir>/eda`.
pub fn cmd_eda(cfg: &AppConfig) -> Result<EdaSummary> {
    cfg.corpus_path()?;
    cfg.check_optional()?;
    let corpus = cfg.load_corpus()?;
    let lexicon = match &cfg.lexicon {
        Some(p) => load_lexicon(p)?,
        None => SentimentLexicon::default_lexicon(),
    };
    let dir = cfg.output_dir.join("eda");
    std::fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    let mut wrote = |report: &str, column: &str| {
        files.push(format!("{report}_{column}.csv"));
        files.push(format!("{report}_{column}.json"));
    };

    let mut target_means = BTreeMap::new();
    for (c, name) in TARGET_NAMES.iter().enumerate() {
        let h = histogram_targets(&corpus, name)?;
        write_report(&dir, "histogram", name, &h, &h.to_csv())?;
        wrote("histogram", name);
        let col = corpus.target_column(c);
        target_means.insert(name.to_string(), col.iter().sum::<f64>() / col.len() as f64);
    }
    let targets = correlation_matrix(&corpus, Axis::Targets, Axis::Targets);
    write_report(&dir, "correlation", "targets", &targets, &targets.to_csv())?;
    wrote("correlation", "targets");
    let features = correlation_matrix(&corpus, Axis::Features, Axis::Targets);
    write_report(&dir, "correlation", "features_targets", &features, &features.to_csv())?;
    wrote("correlation", "features_targets");
    let sentiment = sentiment_report(&corpus, &lexicon);
    write_report(&dir, "sentiment", "scatter", &sentiment, &sentiment.to_csv())?;
    wrote("sentiment", "scatter");

    let mut load = Vec::new();
    corpus.report().write_text(&mut load)?;
    std::fs::write(dir.join("load_report.txt"), load)?;
    files.push("load_report.txt".into());

    let r = corpus.report();
    let summary = EdaSummary {
        source: corpus.provenance().source.display().to_string(),
        fingerprint: corpus.provenance().fingerprint.clone(),
        rows: corpus.len(),
        skipped_rows: r.skipped,
        empty_titles: r.empty_titles,
        empty_bodies: r.empty_bodies,
        target_means,
        undefined_target_correlations: targets.undefined.len(),
        undefined_feature_correlations: features.undefined.len(),
        mean_polarity: sentiment.mean_polarity,
        mean_subjectivity: sentiment.mean_subjectivity,
        files,
    };
    write_json(&dir.join("eda_summary.json"), &summary)?;
    Ok(summary)
}

/// Loads the configured vocabulary, or builds one from the corpus and saves it
/// as `<output_dir>/vocab.txt`.
pub fn resolve_vocab(cfg: &AppConfig, corpus: &Corpus) -> Result<Vocabulary> {
    if let Some(p) = &cfg.vocab {
        return load_vocab(p).with_context(|| format!("loading vocabulary {}", p.display()));
    }
    let texts = corpus.records().iter().flat_map(|r| [r.title.as_str(), r.body.as_str()]);
    let vocab = Vocabulary::build_from_texts(texts, 2);
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("vocab.txt");
    std::fs::write(&path, vocab.to_file_string())?;
    log::info!("built a {}-token vocabulary from the corpus at {}", vocab.len(), path.display());
    Ok(vocab)
}

/// Trains with the configured split and writes `model.qsw` and `train_manifest.json`.
pub fn cmd_train(cfg: &AppConfig) -> Result<RunManifest> {
    cfg.corpus_path()?;
    cfg.check_optional()?;
    cfg.train.validate()?;
    let corpus = cfg.load_corpus()?;
    let vocab = resolve_vocab(cfg, &corpus)?;
    let model_config = cfg.model_config(&vocab)?;
    let outcome = train_run(&corpus, &vocab, &model_config, &cfg.train)?;
    let bytes = write_archive(outcome.model.weights(), &model_config)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    std::fs::write(cfg.output_dir.join("model.qsw"), &bytes)?;
    let mut manifest = RunManifest::new(&corpus, &model_config, &cfg.train, &outcome);
    manifest.archive_fingerprint = Some(archive_fingerprint(&bytes));
    manifest.write(&cfg.output_dir.join("train_manifest.json"))?;
    Ok(manifest)
}

/// Sweeps the configured learning rates; writes the grid files and `sweep_manifests.json`.
pub fn cmd_sweep(cfg: &AppConfig) -> Result<EvalGrid> {
    cfg.corpus_path()?;
    cfg.check_optional()?;
    cfg.train.validate()?;
    for &lr in &cfg.learning_rates {
        TrainConfig {
            learning_rate: lr,
            ..cfg.train.clone()
        }
        .validate()?;
    }
    let corpus = cfg.load_corpus()?;
    let vocab = resolve_vocab(cfg, &corpus)?;
    let model_config = cfg.model_config(&vocab)?;
    let sweep = lr_sweep(&corpus, &vocab, &model_config, &cfg.train, &cfg.learning_rates)?;
    sweep.grid.write(&cfg.output_dir)?;
    write_json(&cfg.output_dir.join("sweep_manifests.json"), &sweep.manifests)?;
    if let Some((lr, epoch, mse)) = sweep.grid.best() {
        log::info!("best cell: lr {lr:e}, epoch {epoch}, mse {mse:.5}");
    }
    Ok(sweep.grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mse: f64,
    pub validation_rows: usize,
    pub model: String,
}

/// Validation MSE of a saved archive on the configured split; also written to `evaluation.json`.
pub fn cmd_evaluate(cfg: &AppConfig) -> Result<Evaluation> {
    cfg.corpus_path()?;
    cfg.vocab_path()?;
    let weights_path = cfg.weights_path()?;
    let corpus = cfg.load_corpus()?;
    let vocab = load_vocab(cfg.vocab_path()?)?;
    let bytes = std::fs::read(weights_path)?;
    let (weights, model_config) = crate::model::read_archive(&bytes)?;
    let model = Model::new(model_config, weights)?;
    let mse = evaluate(&corpus, &vocab, &model, &cfg.train)?;
    let fold = crate::train::select_fold(&corpus, &cfg.train)?;
    let eval = Evaluation {
        mse,
        validation_rows: fold.validation.len(),
        model: archive_fingerprint(&bytes),
    };
    std::fs::create_dir_all(&cfg.output_dir)?;
    write_json(&cfg.output_dir.join("evaluation.json"), &eval)?;
    Ok(eval)
}

/// A loaded model with the vocabulary it reads and the archive fingerprint.
#[derive(Debug, Clone)]
pub struct Scorer {
    pub model: Model<f32>,
    pub vocab: Vocabulary,
    pub max_len: usize,
    pub fingerprint: String,
}

impl Scorer {
    pub fn load(cfg: &AppConfig) -> Result<Self> {
        let vocab = load_vocab(cfg.vocab_path()?)?;
        let bytes = std::fs::read(cfg.weights_path()?)?;
        let (weights, model_config) = crate::model::read_archive(&bytes)?;
        if vocab.len() > model_config.vocab_size {
            bail!(
                "vocabulary has {} tokens but the archive embeds {}",
                vocab.len(),
                model_config.vocab_size
            );
        }
        let max_len = cfg.train.max_len.min(model_config.max_positions);
        Ok(Scorer {
            model: Model::new(model_config, weights)?,
            vocab,
            max_len,
            fingerprint: archive_fingerprint(&bytes),
        })
    }

    /// The 20 scores keyed by target name.
    pub fn score(&self, title: &str, body: &str) -> Result<BTreeMap<String, f64>> {
        let input = encode_pair(title, body, &self.vocab, self.max_len.max(3));
        let p = self.model.predict(&input)?;
        Ok(p.named().map(|(n, s)| (n.to_string(), s as f64)).collect())
    }
}

pub fn cmd_predict(cfg: &AppConfig, title: &str, body: &str) -> Result<BTreeMap<String, f64>> {
    Scorer::load(cfg)?.score(title, body)
}

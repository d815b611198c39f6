use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qscore::app::{self, AppConfig};
use qscore::corpus::{ColumnPolicy, SplitPlan};

/// Question-quality scoring toolkit.
#[derive(Parser)]
#[command(name = "qscore", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Histograms, correlation tables and sentiment scores for a corpus.
    Eda,
    /// Train one model and save its weight archive.
    Train,
    /// Train once per learning rate and write the MSE grid.
    Sweep,
    /// Validation MSE of a saved archive.
    Evaluate,
    /// Score one question and print the 20 scores as JSON.
    Predict {
        #[arg(long, default_value = "")]
        title: String,
        #[arg(long, default_value = "")]
        body: String,
    },
    /// Serve the scoring endpoint over HTTP.
    Serve,
}

/// Flags take precedence over the config file, which takes precedence over defaults.
#[derive(Args)]
struct Overrides {
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Model shape: tiny or base.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    vocab: Option<PathBuf>,
    #[arg(long, global = true)]
    lexicon: Option<PathBuf>,
    #[arg(long, global = true)]
    weights: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Skip invalid rows instead of failing.
    #[arg(long, global = true)]
    lenient: bool,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    /// Comma-separated learning rates for `sweep`.
    #[arg(long, global = true, value_delimiter = ',')]
    learning_rates: Option<Vec<f64>>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    max_len: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Grouped holdout with this validation fraction.
    #[arg(long, global = true, conflicts_with = "folds")]
    holdout: Option<f64>,
    /// Grouped k-fold with this many folds.
    #[arg(long, global = true)]
    folds: Option<usize>,
    /// Which fold to train or evaluate.
    #[arg(long, global = true)]
    fold: Option<usize>,
    #[arg(long, global = true)]
    weight_decay: Option<f64>,
    /// Also report validation MSE on the original target scale.
    #[arg(long, global = true)]
    raw_scale_mse: bool,
    /// Address for `serve`, e.g. 127.0.0.1:8080.
    #[arg(long, global = true)]
    address: Option<String>,
}

impl Overrides {
    fn resolve(self) -> anyhow::Result<AppConfig> {
        let mut c = match &self.config {
            Some(p) => AppConfig::from_file(p)?,
            None => AppConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field { $target = v; })*
            };
        }
        set! {
            preset => c.preset,
            output_dir => c.output_dir,
            learning_rate => c.train.learning_rate,
            learning_rates => c.learning_rates,
            epochs => c.train.epochs,
            batch_size => c.train.batch_size,
            max_len => c.train.max_len,
            fold => c.train.fold,
            weight_decay => c.train.optimizer.weight_decay,
            address => c.address,
        }
        for (flag, slot) in [
            (self.corpus, &mut c.corpus),
            (self.vocab, &mut c.vocab),
            (self.lexicon, &mut c.lexicon),
            (self.weights, &mut c.weights),
        ] {
            if flag.is_some() {
                *slot = flag;
            }
        }
        if let Some(seed) = self.seed {
            c.train.seed = seed;
            c.train.split.seed = seed;
        }
        let split_seed = c.train.split.seed;
        let group_key = c.train.split.group_key;
        if let Some(f) = self.holdout {
            c.train.split = SplitPlan::holdout(f, split_seed).with_group_key(group_key);
        }
        if let Some(k) = self.folds {
            c.train.split = SplitPlan::group_kfold(k, split_seed).with_group_key(group_key);
        }
        if self.lenient {
            c.column_policy = ColumnPolicy::Lenient;
        }
        if self.raw_scale_mse {
            c.train.raw_scale_mse = true;
        }
        Ok(c)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = cli.overrides.resolve()?;
    match cli.command {
        Command::Eda => {
            let s = app::cmd_eda(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Command::Train => {
            let m = app::cmd_train(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&m)?);
        }
        Command::Sweep => print!("{}", app::cmd_sweep(&cfg)?.to_csv()),
        Command::Evaluate => println!("{}", serde_json::to_string_pretty(&app::cmd_evaluate(&cfg)?)?),
        Command::Predict { title, body } => {
            println!("{}", serde_json::to_string_pretty(&app::cmd_predict(&cfg, &title, &body)?)?)
        }
        Command::Serve => tokio::runtime::Runtime::new()?.block_on(app::serve::serve(&cfg))?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

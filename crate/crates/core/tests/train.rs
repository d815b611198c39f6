mod common;

use proptest::prelude::*;
use qscore::corpus::{make_split, SplitPlan};
use qscore::model::{Model, ModelConfig};
use qscore::synthetic::{keyword_corpus, keyword_vocab};
use qscore::train::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_setup(rows: usize) -> (qscore::corpus::Corpus, qscore::tokenizer::Vocabulary, ModelConfig, TrainConfig) {
    let corpus = keyword_corpus(rows, 5);
    let vocab = keyword_vocab();
    let model = ModelConfig::tiny().with_vocab_size(vocab.len()).with_max_positions(32);
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        epochs: 2,
        max_len: 32,
        seed: 3,
        ..TrainConfig::default()
    };
    (corpus, vocab, model, cfg)
}

#[test]
fn bce_matches_scalar_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p: Vec<Vec<f64>> = (0..3).map(|_| (0..20).map(|_| rng.gen_range(0.01..0.99)).collect()).collect();
    let t: Vec<Vec<f64>> = (0..3).map(|_| (0..20).map(|_| rng.gen::<f64>()).collect()).collect();
    let mut cells = Vec::new();
    for r in 0..3 {
        for c in 0..20 {
            let (pi, ti) = (p[r][c], t[r][c]);
            cells.push(-(ti * pi.ln() + (1.0 - ti) * (1.0 - pi).ln()));
        }
    }
    let expected = cells.iter().sum::<f64>() / 60.0;
    assert!((bce_loss(&p, &t).unwrap() - expected).abs() < 1e-9);
}

#[test]
fn constant_half_against_uniform_targets_is_one_twelfth() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t: Vec<Vec<f64>> = (0..5000).map(|_| (0..20).map(|_| rng.gen::<f64>()).collect()).collect();
    let p = vec![vec![0.5; 20]; t.len()];
    let m = mse(&p, &t).unwrap();
    assert!((m - 1.0 / 12.0).abs() < 2e-3, "{m}");
}

#[test]
fn zero_epochs_returns_initial_weights() {
    let (corpus, vocab, model, cfg) = small_setup(60);
    let cfg = TrainConfig { epochs: 0, ..cfg };
    let out = train_run(&corpus, &vocab, &model, &cfg).unwrap();
    assert!(out.validation_mse.is_empty());
    assert_eq!(out.steps, 0);
    assert_eq!(out.model, Model::<f32>::init(model, cfg.seed).unwrap());
}

#[test]
fn final_short_batch_is_kept() {
    let (corpus, vocab, model, cfg) = small_setup(80);
    let out = train_run(&corpus, &vocab, &model, &cfg).unwrap();
    let n = out.fold.train.len() as u64;
    assert_eq!(out.steps, cfg.epochs as u64 * n.div_ceil(cfg.batch_size as u64));
    assert_eq!(out.validation_mse.len(), cfg.epochs);
    assert_eq!(out.epoch_seconds.len(), cfg.epochs);
    assert!(out.validation_mse.iter().all(|m| *m >= 0.0));
}

#[test]
fn runs_are_bit_identical() {
    let (corpus, vocab, model, cfg) = small_setup(80);
    let a = train_run(&corpus, &vocab, &model, &cfg).unwrap();
    let b = train_run(&corpus, &vocab, &model, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.validation_mse, b.validation_mse);
    let c = train_run(&corpus, &vocab, &model, &TrainConfig { seed: 4, ..cfg }).unwrap();
    assert_ne!(a.model, c.model);
}

#[test]
fn single_rate_sweep_matches_run() {
    let (corpus, vocab, model, cfg) = small_setup(60);
    let sweep = lr_sweep(&corpus, &vocab, &model, &cfg, &[cfg.learning_rate]).unwrap();
    let run = train_run(&corpus, &vocab, &model, &cfg).unwrap();
    assert_eq!(sweep.grid.mse, vec![run.validation_mse]);
    assert_eq!(sweep.grid.to_csv().lines().next(), Some("epoch,1e-3"));
    assert!(lr_sweep(&corpus, &vocab, &model, &cfg, &[]).is_err());
}

#[test]
fn raw_scale_mse_is_reported_on_request() {
    let (corpus, vocab, model, cfg) = small_setup(60);
    let cfg = TrainConfig {
        raw_scale_mse: true,
        epochs: 1,
        ..cfg
    };
    let out = train_run(&corpus, &vocab, &model, &cfg).unwrap();
    assert_eq!(out.raw_validation_mse.as_ref().map(Vec::len), Some(1));
}

#[test]
fn evaluate_reproduces_final_epoch() {
    let (corpus, vocab, model, cfg) = small_setup(80);
    let out = train_run(&corpus, &vocab, &model, &cfg).unwrap();
    let m = evaluate(&corpus, &vocab, &out.model, &cfg).unwrap();
    assert_eq!(m, *out.validation_mse.last().unwrap());
}

#[test]
fn cross_validation_covers_every_fold() {
    let (corpus, vocab, model, cfg) = small_setup(60);
    let cfg = TrainConfig {
        split: SplitPlan::group_kfold(3, 0),
        epochs: 1,
        ..cfg
    };
    let outs = cross_validate(&corpus, &vocab, &model, &cfg).unwrap();
    assert_eq!(outs.len(), 3);
    let mut seen: Vec<usize> = outs.iter().flat_map(|o| o.fold.validation.clone()).collect();
    seen.sort();
    assert_eq!(seen, (0..60).collect::<Vec<_>>());
}

#[test]
fn transform_depends_only_on_training_rows() {
    let corpus = keyword_corpus(100, 8);
    let fold = &make_split(&corpus, &SplitPlan::holdout(0.3, 1)).unwrap()[0];
    let train: Vec<[f64; 20]> = fold.train.iter().map(|&i| *corpus.targets()[i].values()).collect();
    let a = fit_target_transform(&train).unwrap();
    // Same training rows in another order, validation rows irrelevant.
    let mut shuffled = train.clone();
    shuffled.reverse();
    let b = fit_target_transform(&shuffled).unwrap();
    assert_eq!(a, b);
}

#[test]
fn invalid_configs_are_rejected() {
    let (corpus, vocab, model, cfg) = small_setup(20);
    let too_long = TrainConfig { max_len: 64, ..cfg.clone() };
    assert!(matches!(train_run(&corpus, &vocab, &model, &too_long), Err(TrainError::InvalidConfig(_))));
    let small_vocab = model.clone().with_vocab_size(5);
    assert!(matches!(train_run(&corpus, &vocab, &small_vocab, &cfg), Err(TrainError::InvalidConfig(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transform_is_monotone_and_bounded(col in proptest::collection::vec(0u8..40, 2..100), probes in proptest::collection::vec(-0.5f64..1.5, 1..20)) {
        let col: Vec<f64> = col.iter().map(|&v| v as f64 / 39.0).collect();
        let t = ColumnTransform::fit(&col).unwrap();
        let mut probes = probes;
        probes.sort_by(f64::total_cmp);
        let mapped: Vec<f64> = probes.iter().map(|&x| t.apply(x)).collect();
        prop_assert!(mapped.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(mapped.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn invert_apply_round_trips_unique_values(col in proptest::collection::btree_set(0u16..1000, 2..60)) {
        let col: Vec<f64> = col.iter().map(|&v| v as f64 / 999.0).collect();
        let t = ColumnTransform::fit(&col).unwrap();
        for &x in &col {
            prop_assert_eq!(t.invert(t.apply(x)), x);
        }
    }
}

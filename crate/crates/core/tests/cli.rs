use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qscore::corpus::write_corpus_csv;
use qscore::synthetic::{keyword_rows, keyword_vocab};

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new(rows: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_corpus_csv(&keyword_rows(rows, 4), std::fs::File::create(dir.path().join("train.csv")).unwrap()).unwrap();
        std::fs::write(dir.path().join("vocab.txt"), keyword_vocab().to_file_string()).unwrap();
        Fixture { dir }
    }

    fn path(&self, p: &str) -> PathBuf {
        self.dir.path().join(p)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_qscore"))
            .current_dir(self.dir.path())
            .env("RUST_LOG", "warn")
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }
}

const FAST: [&str; 6] = ["--epochs", "2", "--max-len", "32", "--learning-rate", "1e-3"];

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn eda_writes_every_product_deterministically() {
    let f = Fixture::new(120);
    f.ok(&["eda", "--corpus", "train.csv", "--output-dir", "a"]);
    f.ok(&["eda", "--corpus", "train.csv", "--output-dir", "b"]);
    let a = read_dir_sorted(&f.path("a/eda"));
    let b = read_dir_sorted(&f.path("b/eda"));
    assert_eq!(a, b);
    let histograms: Vec<_> = a.iter().filter(|(n, _)| n.starts_with("histogram_") && n.ends_with(".csv")).collect();
    assert_eq!(histograms.len(), 20);
    for (name, bytes) in histograms {
        let total: usize = std::str::from_utf8(bytes)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
            .sum();
        assert_eq!(total, 120, "{name}");
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(f.path("a/eda/eda_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["rows"], 120);
    let features = std::fs::read_to_string(f.path("a/eda/correlation_features_targets.csv")).unwrap();
    assert_eq!(features.lines().count(), 9);
    assert!(f.path("a/eda/sentiment_scatter.csv").exists());
}

#[test]
fn one_row_corpus_gives_undefined_correlations() {
    let f = Fixture::new(1);
    f.ok(&["eda", "--corpus", "train.csv"]);
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(f.path("qscore-out/eda/correlation_targets.json")).unwrap()).unwrap();
    assert_eq!(m["undefined"].as_array().unwrap().len(), 400);
    assert!(m["values"].as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap()).all(|v| v.is_null()));
}

#[test]
fn train_evaluate_predict_round_trip() {
    let f = Fixture::new(150);
    let mut args = vec!["train", "--corpus", "train.csv", "--vocab", "vocab.txt"];
    args.extend(FAST);
    f.ok(&args);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(f.path("qscore-out/train_manifest.json")).unwrap()).unwrap();
    let final_mse = manifest["validation_mse"].as_array().unwrap().last().unwrap().as_f64().unwrap();

    let mut args = vec!["evaluate", "--corpus", "train.csv", "--vocab", "vocab.txt", "--weights", "qscore-out/model.qsw"];
    args.extend(FAST);
    let eval: serde_json::Value = serde_json::from_str(&f.ok(&args)).unwrap();
    assert_eq!(eval["mse"].as_f64().unwrap(), final_mse);
    assert_eq!(eval["model"], manifest["archive_fingerprint"]);

    let out = f.ok(&[
        "predict", "--vocab", "vocab.txt", "--weights", "qscore-out/model.qsw", "--title", "", "--body", "",
    ]);
    let scores: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&out).unwrap();
    assert_eq!(scores.len(), 20);
    assert!(scores.values().all(|v| {
        let x = v.as_f64().unwrap();
        x > 0.0 && x < 1.0
    }));
    assert!(scores.contains_key("well_written"));
}

#[test]
fn train_without_vocab_builds_one() {
    let f = Fixture::new(60);
    let mut args = vec!["train", "--corpus", "train.csv", "--epochs", "1"];
    args.extend(&FAST[2..]);
    f.ok(&args);
    assert!(f.path("qscore-out/vocab.txt").exists());
    assert!(f.path("qscore-out/model.qsw").exists());
}

#[test]
fn sweep_writes_one_column_per_rate() {
    let f = Fixture::new(60);
    let mut args = vec!["sweep", "--corpus", "train.csv", "--vocab", "vocab.txt", "--learning-rates", "1e-3"];
    args.extend(&FAST[..4]);
    f.ok(&args);
    let grid = std::fs::read_to_string(f.path("qscore-out/sweep_grid.csv")).unwrap();
    assert_eq!(grid, grid.lines().map(|l| format!("{l}\n")).collect::<String>());
    let lines: Vec<&str> = grid.lines().collect();
    assert_eq!(lines[0], "epoch,1e-3");
    assert_eq!(lines.len(), 3);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 2));
}

#[test]
fn flags_override_config_file() {
    let f = Fixture::new(60);
    std::fs::write(
        f.path("config.json"),
        r#"{"corpus": "train.csv", "vocab": "vocab.txt", "output_dir": "from-file",
            "train": {"epochs": 1, "max_len": 32, "learning_rate": 0.001, "seed": 5}}"#,
    )
    .unwrap();
    f.ok(&["train", "--config", "config.json"]);
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(f.path("from-file/train_manifest.json")).unwrap()).unwrap();
    assert_eq!(m["train_config"]["epochs"], 1);
    assert_eq!(m["train_config"]["batch_size"], 6);
    assert_eq!(m["seed"], 5);

    f.ok(&["train", "--config", "config.json", "--epochs", "2", "--output-dir", "from-flags"]);
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(f.path("from-flags/train_manifest.json")).unwrap()).unwrap();
    assert_eq!(m["train_config"]["epochs"], 2);
    assert_eq!(m["seed"], 5);
}

#[test]
fn errors_exit_nonzero() {
    let f = Fixture::new(10);
    let out = f.run(&["train", "--corpus", "missing.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));

    let out = f.run(&["train", "--corpus", "train.csv", "--preset", "huge"]);
    assert!(!out.status.success());

    let out = f.run(&["train", "--corpus", "train.csv", "--learning-rate", "0.5"]);
    assert!(!out.status.success());

    std::fs::write(f.path("bad.json"), "{\"colour\": 1}").unwrap();
    assert!(!f.run(&["eda", "--config", "bad.json"]).status.success());

    let out = f.run(&["predict", "--vocab", "vocab.txt", "--weights", "nope.qsw"]);
    assert!(!out.status.success());
}

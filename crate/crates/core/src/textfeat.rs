//! Engineered text features and descriptive statistics over a corpus:
//! target histograms, Pearson correlation and correlation matrices.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{target_index, Corpus, QuestionRecord, TARGET_COUNT, TARGET_NAMES};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("unknown target column `{0}`")]
    UnknownColumn(String),
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("correlation needs at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("cannot write report: {0}")]
    Io(#[from] io::Error),
}

/// Number of engineered features.
pub const FEATURE_COUNT: usize = 8;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "char_count_title",
    "char_count_body",
    "word_count_title",
    "word_count_body",
    "punct_count_body",
    "dup_words_body",
    "dup_rate_body",
    "sentence_count_body",
];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub char_count_title: usize,
    pub char_count_body: usize,
    pub word_count_title: usize,
    pub word_count_body: usize,
    pub punct_count_body: usize,
    pub dup_words_body: usize,
    pub dup_rate_body: f64,
    pub sentence_count_body: usize,
}

impl FeatureVector {
    /// Values in [`FEATURE_NAMES`] order.
    pub fn as_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.char_count_title as f64,
            self.char_count_body as f64,
            self.word_count_title as f64,
            self.word_count_body as f64,
            self.punct_count_body as f64,
            self.dup_words_body as f64,
            self.dup_rate_body,
            self.sentence_count_body as f64,
        ]
    }
}

/// Lowercased whitespace-separated words with ASCII punctuation trimmed from both ends.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().filter_map(|tok| {
        let w = tok
            .trim_matches(|c: char| c.is_ascii_punctuation())
            .to_lowercase();
        (!w.is_empty()).then_some(w)
    })
}

pub fn extract_features(record: &QuestionRecord) -> FeatureVector {
    let body_words: Vec<String> = words(&record.body).collect();
    let distinct: HashSet<&str> = body_words.iter().map(String::as_str).collect();
    let dup_words_body = body_words.len() - distinct.len();
    let dup_rate_body = if body_words.is_empty() {
        0.0
    } else {
        dup_words_body as f64 / body_words.len() as f64
    };
    FeatureVector {
        char_count_title: record.title.chars().count(),
        char_count_body: record.body.chars().count(),
        word_count_title: words(&record.title).count(),
        word_count_body: body_words.len(),
        punct_count_body: record.body.chars().filter(char::is_ascii_punctuation).count(),
        dup_words_body,
        dup_rate_body,
        sentence_count_body: record
            .body
            .split(['.', '?', '!'])
            .filter(|s| !s.trim().is_empty())
            .count(),
    }
}

/// Ten equal-width bins over `[0, 1]`; the last bin is closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub column: String,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub const HISTOGRAM_BINS: usize = 10;

impl Histogram {
    pub fn from_values(column: impl Into<String>, values: &[f64]) -> Self {
        let bin_edges = (0..=HISTOGRAM_BINS)
            .map(|i| i as f64 / HISTOGRAM_BINS as f64)
            .collect();
        let mut counts = vec![0; HISTOGRAM_BINS];
        for &v in values {
            let bin = ((v * HISTOGRAM_BINS as f64).floor() as usize).min(HISTOGRAM_BINS - 1);
            counts[bin] += 1;
        }
        Histogram {
            column: column.into(),
            bin_edges,
            counts,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.bin_edges[i],
                self.bin_edges[i + 1],
                c
            ));
        }
        out
    }
}

pub fn histogram_targets(corpus: &Corpus, column: &str) -> Result<Histogram, StatsError> {
    let idx = target_index(column).ok_or_else(|| StatsError::UnknownColumn(column.into()))?;
    Ok(Histogram::from_values(
        TARGET_NAMES[idx],
        &corpus.target_column(idx),
    ))
}

/// Pearson product-moment correlation. Returns NaN when either series is constant.
pub fn correlation(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(StatsError::TooShort(xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(f64::NAN);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Targets,
    Features,
}

/// Labelled correlation table. Undefined entries (constant series) are NaN and
/// listed in `undefined`; they serialize to JSON `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub undefined: Vec<(usize, usize)>,
}

impl CorrelationMatrix {
    pub fn get(&self, row: &str, col: &str) -> Option<f64> {
        let r = self.row_labels.iter().position(|l| l == row)?;
        let c = self.col_labels.iter().position(|l| l == col)?;
        Some(self.values[r][c])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for c in &self.col_labels {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (label, row) in self.row_labels.iter().zip(&self.values) {
            out.push_str(label);
            for v in row {
                out.push(',');
                if v.is_nan() {
                    out.push_str("NaN");
                } else {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

fn series(corpus: &Corpus, axis: Axis) -> (Vec<String>, Vec<Vec<f64>>) {
    match axis {
        Axis::Targets => (
            TARGET_NAMES.iter().map(|s| s.to_string()).collect(),
            (0..TARGET_COUNT).map(|c| corpus.target_column(c)).collect(),
        ),
        Axis::Features => {
            let feats: Vec<[f64; FEATURE_COUNT]> = corpus
                .records()
                .iter()
                .map(|r| extract_features(r).as_array())
                .collect();
            (
                FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
                (0..FEATURE_COUNT)
                    .map(|f| feats.iter().map(|row| row[f]).collect())
                    .collect(),
            )
        }
    }
}

/// Pairwise Pearson correlation of `rows` series against `cols` series.
pub fn correlation_matrix(corpus: &Corpus, rows: Axis, cols: Axis) -> CorrelationMatrix {
    let (row_labels, row_series) = series(corpus, rows);
    let (col_labels, col_series) = series(corpus, cols);
    let symmetric = rows == cols;
    let mut values = vec![vec![f64::NAN; col_series.len()]; row_series.len()];
    for r in 0..row_series.len() {
        for c in 0..col_series.len() {
            if symmetric && c < r {
                values[r][c] = values[c][r];
                continue;
            }
            // Series shorter than 2 are treated as undefined everywhere.
            let v = correlation(&row_series[r], &col_series[c]).unwrap_or(f64::NAN);
            values[r][c] = if symmetric && r == c && !v.is_nan() { 1.0 } else { v };
        }
    }
    let undefined = values
        .iter()
        .enumerate()
        .flat_map(|(r, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, v)| v.is_nan())
                .map(move |(c, _)| (r, c))
        })
        .collect();
    CorrelationMatrix {
        row_labels,
        col_labels,
        values,
        undefined,
    }
}

/// Writes `<report>_<column>.json` and `<report>_<column>.csv` under `dir`.
pub fn write_report<T: Serialize>(
    dir: &Path,
    report: &str,
    column: &str,
    json: &T,
    csv: &str,
) -> Result<(), StatsError> {
    fs::create_dir_all(dir)?;
    let stem = format!("{report}_{column}");
    let body = serde_json::to_string_pretty(json).map_err(io::Error::other)?;
    fs::write(dir.join(format!("{stem}.json")), body + "\n")?;
    fs::write(dir.join(format!("{stem}.csv")), csv)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Category, TargetVector};
    use proptest::prelude::*;

    fn rec(title: &str, body: &str) -> QuestionRecord {
        QuestionRecord {
            qa_id: "1".into(),
            title: title.into(),
            body: body.into(),
            category: Category::Technology,
            host: "superuser.com".into(),
        }
    }

    #[test]
    fn empty_record_is_all_zero() {
        assert_eq!(extract_features(&rec("", "")), FeatureVector::default());
    }

    #[test]
    fn repeated_words() {
        let f = extract_features(&rec("", "go go go."));
        assert_eq!(f.word_count_body, 3);
        assert_eq!(f.dup_words_body, 2);
        assert!((f.dup_rate_body - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.sentence_count_body, 1);
        assert_eq!(f.punct_count_body, 1);
    }

    #[test]
    fn mixed_text_features() {
        let f = extract_features(&rec("Héllo, world?", "Is it? \"Yes\" -- it is! ..."));
        assert_eq!(f.char_count_title, 13);
        assert_eq!(f.word_count_title, 2);
        // is, it, yes, it, is ("--" and "..." strip to nothing)
        assert_eq!(f.word_count_body, 5);
        assert_eq!(f.dup_words_body, 2);
        assert_eq!(f.sentence_count_body, 2);
        assert_eq!(f.punct_count_body, 9);
    }

    #[test]
    fn histogram_binning() {
        let h = Histogram::from_values("x", &[0.05, 0.05, 0.95]);
        assert_eq!(h.counts, vec![2, 0, 0, 0, 0, 0, 0, 0, 0, 1]);
        assert_eq!(h.bin_edges.len(), 11);
        let h = Histogram::from_values("x", &[1.0; 7]);
        assert_eq!(h.counts[9], 7);
        assert_eq!(h.total(), 7);
        let h = Histogram::from_values("x", &[0.1, 0.0, 0.9]);
        assert_eq!(h.counts[0], 1);
        assert_eq!(h.counts[1], 1);
        assert_eq!(h.counts[9], 1);
    }

    #[test]
    fn histogram_unknown_column() {
        let corpus = Corpus::from_rows(vec![(rec("a", "b"), TargetVector([0.5; 20]))], "mem").unwrap();
        assert!(matches!(
            histogram_targets(&corpus, "answer_helpful"),
            Err(StatsError::UnknownColumn(_))
        ));
        assert_eq!(histogram_targets(&corpus, "question_well_written").unwrap().counts[5], 1);
    }

    #[test]
    fn pearson_examples() {
        assert_eq!(correlation(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(correlation(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        // Hand computation: centred x = (-1.5,-.5,.5,1.5), y = (-1.5,.5,-.5,1.5);
        // sxy = 2.25-.25-.25+2.25 = 4, sxx = syy = 5, r = 4/5.
        let r = correlation(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-15);
        assert!(correlation(&[1.0, 1.0], &[0.0, 2.0]).unwrap().is_nan());
        assert!(matches!(
            correlation(&[1.0], &[1.0, 2.0]),
            Err(StatsError::LengthMismatch(1, 2))
        ));
        assert!(matches!(correlation(&[1.0], &[1.0]), Err(StatsError::TooShort(1))));
    }

    #[test]
    fn single_row_matrix_is_undefined() {
        let corpus = Corpus::from_rows(vec![(rec("a", "b c"), TargetVector([0.5; 20]))], "mem").unwrap();
        let m = correlation_matrix(&corpus, Axis::Targets, Axis::Targets);
        assert!(m.values.iter().flatten().all(|v| v.is_nan()));
        assert_eq!(m.undefined.len(), 400);
        let json = serde_json::to_value(&m).unwrap();
        assert!(json["values"][0][0].is_null());
    }

    proptest! {
        #[test]
        fn correlation_affine_invariance(
            xs in prop::collection::vec(-100.0f64..100.0, 3..40),
            a in 0.1f64..10.0,
            b in -50.0f64..50.0,
            seed in any::<u64>(),
        ) {
            let ys: Vec<f64> = xs.iter().enumerate()
                .map(|(i, x)| x.sin() + ((seed.wrapping_mul(i as u64 + 1) % 97) as f64))
                .collect();
            let r = correlation(&xs, &ys).unwrap();
            prop_assume!(!r.is_nan());
            let up: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let down: Vec<f64> = xs.iter().map(|x| -a * x + b).collect();
            prop_assert!((correlation(&up, &ys).unwrap() - r).abs() < 1e-12);
            prop_assert!((correlation(&down, &ys).unwrap() + r).abs() < 1e-12);
        }

        #[test]
        fn dup_rate_bounded(title in ".{0,40}", body in "[a-c ,.!?]{0,80}") {
            let f = extract_features(&rec(&title, &body));
            prop_assert!((0.0..=1.0).contains(&f.dup_rate_body));
            prop_assert!(f.dup_words_body <= f.word_count_body);
            prop_assert_eq!(f, extract_features(&rec(&title, &body)));
        }

        #[test]
        fn histogram_conserves_mass(values in prop::collection::vec(0.0f64..=1.0, 0..200)) {
            prop_assert_eq!(Histogram::from_values("c", &values).total(), values.len());
        }
    }
}

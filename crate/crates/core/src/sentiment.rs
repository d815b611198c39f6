//! Averaging-lexicon sentiment scorer (polarity and subjectivity).

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::textfeat::words;

/// Lexicon shipped with the crate, one `word<TAB>polarity<TAB>subjectivity` per line.
pub const DEFAULT_LEXICON: &str = include_str!("../data/default_lexicon.tsv");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {cause}")]
    Parse { line: usize, cause: String },
    #[error("line {line}: {field} = {value} out of bounds")]
    ValueOutOfBounds {
        line: usize,
        field: &'static str,
        value: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub polarity: f64,
    pub subjectivity: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SentimentLexicon {
    entries: HashMap<String, LexiconEntry>,
    source: PathBuf,
}

impl SentimentLexicon {
    pub fn parse(text: &str, source: impl Into<PathBuf>) -> Result<Self, LexiconError> {
        let mut entries = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() != 3 {
                return Err(LexiconError::Parse {
                    line,
                    cause: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            let number = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| LexiconError::Parse {
                    line,
                    cause: format!("`{s}`: {e}"),
                })
            };
            let polarity = number(fields[1])?;
            let subjectivity = number(fields[2])?;
            if !(-1.0..=1.0).contains(&polarity) {
                return Err(LexiconError::ValueOutOfBounds {
                    line,
                    field: "polarity",
                    value: polarity,
                });
            }
            if !(0.0..=1.0).contains(&subjectivity) {
                return Err(LexiconError::ValueOutOfBounds {
                    line,
                    field: "subjectivity",
                    value: subjectivity,
                });
            }
            let word = fields[0].trim().to_lowercase();
            let entry = LexiconEntry {
                polarity,
                subjectivity,
            };
            if entries.insert(word.clone(), entry).is_some() {
                log::warn!("lexicon line {line}: duplicate word `{word}`, keeping the later entry");
            }
        }
        Ok(SentimentLexicon {
            entries,
            source: source.into(),
        })
    }

    pub fn default_lexicon() -> Self {
        Self::parse(DEFAULT_LEXICON, "<builtin>").expect("builtin lexicon is valid")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&LexiconEntry> {
        self.entries.get(word)
    }

    pub fn source(&self) -> &Path {
        &self.source
    }
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<SentimentLexicon, LexiconError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    SentimentLexicon::parse(&text, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SentimentScore {
    pub polarity: f64,
    pub subjectivity: f64,
    pub matched_terms: usize,
}

/// Means of the lexicon values over every matched word; `(0, 0, 0)` when nothing matches.
pub fn score_text(text: &str, lexicon: &SentimentLexicon) -> SentimentScore {
    let (mut pol, mut subj, mut n) = (0.0, 0.0, 0usize);
    for w in words(text) {
        if let Some(e) = lexicon.get(&w) {
            pol += e.polarity;
            subj += e.subjectivity;
            n += 1;
        }
    }
    if n == 0 {
        return SentimentScore::default();
    }
    SentimentScore {
        polarity: (pol / n as f64).clamp(-1.0, 1.0),
        subjectivity: (subj / n as f64).clamp(0.0, 1.0),
        matched_terms: n,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentReport {
    pub rows: Vec<(String, SentimentScore)>,
    pub mean_polarity: f64,
    pub mean_subjectivity: f64,
}

impl SentimentReport {
    /// `qa_id,polarity,subjectivity` table.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["qa_id", "polarity", "subjectivity"]).unwrap();
        for (id, s) in &self.rows {
            w.write_record([id.clone(), s.polarity.to_string(), s.subjectivity.to_string()])
                .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

/// Scores every question body. Unmatched bodies count as `(0, 0)` in the means.
pub fn sentiment_report(corpus: &Corpus, lexicon: &SentimentLexicon) -> SentimentReport {
    let rows: Vec<(String, SentimentScore)> = corpus
        .records()
        .iter()
        .map(|r| (r.qa_id.clone(), score_text(&r.body, lexicon)))
        .collect();
    let n = rows.len().max(1) as f64;
    SentimentReport {
        mean_polarity: rows.iter().map(|(_, s)| s.polarity).sum::<f64>() / n,
        mean_subjectivity: rows.iter().map(|(_, s)| s.subjectivity).sum::<f64>() / n,
        rows,
    }
}

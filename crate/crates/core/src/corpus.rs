//! Question corpus ingestion, target schema and split planning.
//!
//! A corpus file is a CSV with a header row. Only the question title, body,
//! category and host are kept as features, alongside the 20 question-quality
//! targets. Answer-related columns and `question_body_critical` are ignored.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Number of question-quality targets.
pub const TARGET_COUNT: usize = 20;

/// Target names in canonical order.
pub const TARGET_NAMES: [&str; TARGET_COUNT] = [
    "asker_intent_understanding",
    "conversational",
    "expect_short_answer",
    "fact_seeking",
    "has_commonly_accepted_answer",
    "interestingness_others",
    "interestingness_self",
    "multi_intent",
    "not_really_a_question",
    "opinion_seeking",
    "type_choice",
    "type_compare",
    "type_consequence",
    "type_definition",
    "type_entity",
    "type_instructions",
    "type_procedure",
    "type_reason_explanation",
    "type_spelling",
    "well_written",
];

/// Prefix the original dataset puts in front of every question target.
pub const TARGET_COLUMN_PREFIX: &str = "question_";

/// Position of a target name in [`TARGET_NAMES`].
pub fn target_index(name: &str) -> Option<usize> {
    let bare = name.strip_prefix(TARGET_COLUMN_PREFIX).unwrap_or(name);
    TARGET_NAMES.iter().position(|n| *n == bare)
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("malformed row {row}: {cause}")]
    MalformedRow { row: usize, cause: String },
    #[error("row {row}: target `{column}` = {value} is outside [0, 1]")]
    TargetOutOfRange {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("corpus contains no valid rows")]
    Empty,
    #[error("only {groups} distinct groups for {folds} folds")]
    TooFewGroups { groups: usize, folds: usize },
    #[error("invalid split plan: {0}")]
    InvalidPlan(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Technology,
    Stackoverflow,
    Culture,
    Science,
    LifeArts,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Technology,
        Category::Stackoverflow,
        Category::Culture,
        Category::Science,
        Category::LifeArts,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Technology => "TECHNOLOGY",
            Category::Stackoverflow => "STACKOVERFLOW",
            Category::Culture => "CULTURE",
            Category::Science => "SCIENCE",
            Category::LifeArts => "LIFE_ARTS",
        }
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c.to_ascii_lowercase() })
            .collect();
        match norm.as_str() {
            "technology" => Ok(Category::Technology),
            "stackoverflow" => Ok(Category::Stackoverflow),
            "culture" => Ok(Category::Culture),
            "science" => Ok(Category::Science),
            "life_arts" | "lifearts" => Ok(Category::LifeArts),
            _ => Err(format!("unknown category `{s}`")),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub qa_id: String,
    pub title: String,
    pub body: String,
    pub category: Category,
    pub host: String,
}

/// The 20 question-quality targets, each in `[0, 1]`, in [`TARGET_NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetVector(pub [f64; TARGET_COUNT]);

impl TargetVector {
    /// Validates the `[0, 1]` bound. On failure returns the offending column index and value.
    pub fn new(values: [f64; TARGET_COUNT]) -> Result<Self, (usize, f64)> {
        match values
            .iter()
            .position(|v| !(0.0..=1.0).contains(v) || v.is_nan())
        {
            Some(i) => Err((i, values[i])),
            None => Ok(TargetVector(values)),
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        target_index(name).map(|i| self.0[i])
    }

    pub fn values(&self) -> &[f64; TARGET_COUNT] {
        &self.0
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        TARGET_NAMES.iter().copied().zip(self.0.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ColumnPolicy {
    /// Every required column must exist and every row must validate.
    #[default]
    Strict,
    /// Rows that fail validation are skipped and counted.
    Lenient,
}

/// Counts of loaded and skipped rows, plus the reason for every skip.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub loaded: usize,
    pub skipped: usize,
    pub reasons: BTreeMap<String, usize>,
    pub empty_titles: usize,
    pub empty_bodies: usize,
    /// Per skipped row: (1-based data row number, reason).
    #[serde(skip)]
    pub skipped_rows: Vec<(usize, String)>,
}

impl LoadReport {
    fn skip(&mut self, row: usize, kind: &str, detail: String) {
        log::warn!("skipping row {row}: {detail}");
        self.skipped += 1;
        *self.reasons.entry(kind.to_string()).or_default() += 1;
        self.skipped_rows.push((row, detail));
    }

    /// Line-oriented human-readable report.
    pub fn write_text<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        for (row, reason) in &self.skipped_rows {
            writeln!(out, "skipped row {row}: {reason}")?;
        }
        if self.empty_titles > 0 {
            writeln!(out, "rows with empty title: {}", self.empty_titles)?;
        }
        if self.empty_bodies > 0 {
            writeln!(out, "rows with empty body: {}", self.empty_bodies)?;
        }
        writeln!(out, "loaded {} rows, skipped {}", self.loaded, self.skipped)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "loaded": self.loaded,
            "skipped": self.skipped,
            "reasons": self.reasons,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: PathBuf,
    pub rows: usize,
    /// Hex SHA-256 of the source bytes.
    pub fingerprint: String,
}

/// An immutable, validated set of (record, targets) rows.
#[derive(Debug, Clone)]
pub struct Corpus {
    records: Vec<QuestionRecord>,
    targets: Vec<TargetVector>,
    provenance: Provenance,
    report: LoadReport,
}

impl Corpus {
    /// Builds a corpus from in-memory rows. Fails on an empty input or duplicate ids.
    pub fn from_rows(
        rows: Vec<(QuestionRecord, TargetVector)>,
        source: impl Into<PathBuf>,
    ) -> Result<Self, CorpusError> {
        if rows.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut seen = HashSet::with_capacity(rows.len());
        let mut hasher = Sha256::new();
        for (i, (rec, t)) in rows.iter().enumerate() {
            if !seen.insert(rec.qa_id.clone()) {
                return Err(CorpusError::MalformedRow {
                    row: i + 1,
                    cause: format!("duplicate qa_id `{}`", rec.qa_id),
                });
            }
            hasher.update(rec.qa_id.as_bytes());
            hasher.update([0]);
            hasher.update(rec.title.as_bytes());
            hasher.update([0]);
            hasher.update(rec.body.as_bytes());
            hasher.update([0]);
            for v in t.values() {
                hasher.update(v.to_le_bytes());
            }
        }
        let report = LoadReport {
            loaded: rows.len(),
            empty_titles: rows.iter().filter(|(r, _)| r.title.is_empty()).count(),
            empty_bodies: rows.iter().filter(|(r, _)| r.body.is_empty()).count(),
            ..LoadReport::default()
        };
        let provenance = Provenance {
            source: source.into(),
            rows: rows.len(),
            fingerprint: hex::encode(hasher.finalize()),
        };
        let (records, targets) = rows.into_iter().unzip();
        Ok(Corpus {
            records,
            targets,
            provenance,
            report,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[QuestionRecord] {
        &self.records
    }

    pub fn targets(&self) -> &[TargetVector] {
        &self.targets
    }

    pub fn row(&self, i: usize) -> (&QuestionRecord, &TargetVector) {
        (&self.records[i], &self.targets[i])
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn report(&self) -> &LoadReport {
        &self.report
    }

    /// All values of one target column, in row order.
    pub fn target_column(&self, column: usize) -> Vec<f64> {
        self.targets.iter().map(|t| t.0[column]).collect()
    }
}

const REQUIRED_FEATURES: [&str; 4] = ["question_title", "question_body", "category", "host"];

/// Loads a corpus CSV, keeping only question features and the 20 question targets.
pub fn load_corpus(path: impl AsRef<Path>, policy: ColumnPolicy) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut corpus = parse_corpus(&bytes, policy)?;
    corpus.provenance.source = path.to_path_buf();
    Ok(corpus)
}

/// Parses corpus CSV bytes. The provenance fingerprint covers the raw bytes.
pub fn parse_corpus(bytes: &[u8], policy: ColumnPolicy) -> Result<Corpus, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::MalformedRow {
            row: 0,
            cause: e.to_string(),
        })?
        .clone();
    let column_of = |name: &str| headers.iter().position(|h| h.trim() == name);

    let mut feature_cols = [0usize; 4];
    for (slot, name) in feature_cols.iter_mut().zip(REQUIRED_FEATURES) {
        *slot = column_of(name).ok_or_else(|| CorpusError::MissingColumn(name.to_string()))?;
    }
    let id_col = column_of("qa_id");

    let mut target_cols: [Option<usize>; TARGET_COUNT] = [None; TARGET_COUNT];
    for (i, name) in TARGET_NAMES.iter().enumerate() {
        let prefixed = format!("{TARGET_COLUMN_PREFIX}{name}");
        target_cols[i] = column_of(&prefixed).or_else(|| column_of(name));
        if target_cols[i].is_none() && policy == ColumnPolicy::Strict {
            return Err(CorpusError::MissingColumn(prefixed));
        }
    }

    let mut report = LoadReport::default();
    let mut rows = Vec::new();
    let mut seen_ids = HashSet::new();

    for (idx, result) in reader.records().enumerate() {
        let row_no = idx + 1;
        let parsed = result
            .map_err(|e| CorpusError::MalformedRow {
                row: row_no,
                cause: e.to_string(),
            })
            .and_then(|rec| parse_row(&rec, row_no, id_col, &feature_cols, &target_cols))
            .and_then(|(rec, t)| {
                if seen_ids.contains(&rec.qa_id) {
                    Err(CorpusError::MalformedRow {
                        row: row_no,
                        cause: format!("duplicate qa_id `{}`", rec.qa_id),
                    })
                } else {
                    Ok((rec, t))
                }
            });
        match parsed {
            Ok((rec, t)) => {
                seen_ids.insert(rec.qa_id.clone());
                rows.push((rec, t));
            }
            Err(e) if policy == ColumnPolicy::Lenient => {
                let kind = match &e {
                    CorpusError::TargetOutOfRange { .. } => "target_out_of_range",
                    CorpusError::MissingColumn(_) => "missing_target",
                    _ => "malformed_row",
                };
                report.skip(row_no, kind, e.to_string());
            }
            Err(e) => return Err(e),
        }
    }

    let mut corpus = Corpus::from_rows(rows, PathBuf::new())?;
    report.loaded = corpus.report.loaded;
    report.empty_titles = corpus.report.empty_titles;
    report.empty_bodies = corpus.report.empty_bodies;
    corpus.report = report;
    corpus.provenance.fingerprint = hex::encode(Sha256::digest(bytes));
    Ok(corpus)
}

fn parse_row(
    rec: &csv::StringRecord,
    row_no: usize,
    id_col: Option<usize>,
    feature_cols: &[usize; 4],
    target_cols: &[Option<usize>; TARGET_COUNT],
) -> Result<(QuestionRecord, TargetVector), CorpusError> {
    let field = |i: usize| rec.get(i).unwrap_or("");
    let category = field(feature_cols[2])
        .parse::<Category>()
        .map_err(|cause| CorpusError::MalformedRow { row: row_no, cause })?;
    let qa_id = match id_col {
        Some(c) => {
            let id = field(c).trim();
            if id.is_empty() {
                return Err(CorpusError::MalformedRow {
                    row: row_no,
                    cause: "empty qa_id".into(),
                });
            }
            id.to_string()
        }
        None => row_no.to_string(),
    };
    let mut values = [0.0; TARGET_COUNT];
    for (i, col) in target_cols.iter().enumerate() {
        let name = format!("{TARGET_COLUMN_PREFIX}{}", TARGET_NAMES[i]);
        let col = col.ok_or_else(|| CorpusError::MissingColumn(name.clone()))?;
        let raw = field(col).trim();
        values[i] = raw.parse::<f64>().map_err(|_| CorpusError::MalformedRow {
            row: row_no,
            cause: format!("target `{name}` is not a number: `{raw}`"),
        })?;
    }
    let targets = TargetVector::new(values).map_err(|(i, value)| CorpusError::TargetOutOfRange {
        row: row_no,
        column: format!("{TARGET_COLUMN_PREFIX}{}", TARGET_NAMES[i]),
        value,
    })?;
    Ok((
        QuestionRecord {
            qa_id,
            title: field(feature_cols[0]).to_string(),
            body: field(feature_cols[1]).to_string(),
            category,
            host: field(feature_cols[3]).to_string(),
        },
        targets,
    ))
}

/// Writes a corpus as CSV using the original dataset's column names.
pub fn write_corpus_csv<W: std::io::Write>(
    rows: &[(QuestionRecord, TargetVector)],
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "qa_id".to_string(),
        "question_title".into(),
        "question_body".into(),
        "category".into(),
        "host".into(),
    ];
    header.extend(TARGET_NAMES.iter().map(|n| format!("{TARGET_COLUMN_PREFIX}{n}")));
    w.write_record(&header)?;
    for (rec, t) in rows {
        let mut fields = vec![
            rec.qa_id.clone(),
            rec.title.clone(),
            rec.body.clone(),
            rec.category.to_string(),
            rec.host.clone(),
        ];
        fields.extend(t.values().iter().map(|v| v.to_string()));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    #[default]
    BodyHash,
    QaId,
}

/// Grouping identity of a row. Rows with equal ids never straddle a split.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupId {
    BodyHash(u64),
    QaId(String),
}

/// Lowercases and collapses whitespace runs to a single space.
pub fn normalize_body(body: &str) -> String {
    body.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn group_key_of(record: &QuestionRecord, key: GroupKey) -> GroupId {
    match key {
        GroupKey::BodyHash => {
            let digest = Sha256::digest(normalize_body(&record.body).as_bytes());
            let mut first = [0u8; 8];
            first.copy_from_slice(&digest[..8]);
            GroupId::BodyHash(u64::from_le_bytes(first))
        }
        GroupKey::QaId => GroupId::QaId(record.qa_id.clone()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitKind {
    Holdout { holdout_fraction: f64 },
    GroupKfold { n_folds: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    #[serde(flatten)]
    pub kind: SplitKind,
    #[serde(default)]
    pub group_key: GroupKey,
    #[serde(default)]
    pub seed: u64,
}

impl SplitPlan {
    pub fn holdout(fraction: f64, seed: u64) -> Self {
        SplitPlan {
            kind: SplitKind::Holdout {
                holdout_fraction: fraction,
            },
            group_key: GroupKey::BodyHash,
            seed,
        }
    }

    pub fn group_kfold(n_folds: usize, seed: u64) -> Self {
        SplitPlan {
            kind: SplitKind::GroupKfold { n_folds },
            group_key: GroupKey::BodyHash,
            seed,
        }
    }

    pub fn with_group_key(mut self, key: GroupKey) -> Self {
        self.group_key = key;
        self
    }

    pub fn n_pairs(&self) -> usize {
        match self.kind {
            SplitKind::Holdout { .. } => 1,
            SplitKind::GroupKfold { n_folds } => n_folds,
        }
    }
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan::holdout(0.2, 0)
    }
}

/// Train and validation row indices, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Splits a corpus into (train, validation) pairs without splitting any group.
pub fn make_split(corpus: &Corpus, plan: &SplitPlan) -> Result<Vec<Fold>, CorpusError> {
    let groups: Vec<GroupId> = corpus
        .records()
        .iter()
        .map(|r| group_key_of(r, plan.group_key))
        .collect();
    split_groups(&groups, plan)
}

/// Splitting over precomputed group ids, one per row.
pub fn split_groups(groups: &[GroupId], plan: &SplitPlan) -> Result<Vec<Fold>, CorpusError> {
    let n = groups.len();
    if n == 0 {
        return Err(CorpusError::Empty);
    }
    // BTreeMap keeps group order independent of hashing.
    let mut members: BTreeMap<&GroupId, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        members.entry(g).or_default().push(i);
    }
    let mut buckets: Vec<Vec<usize>> = members.into_values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    buckets.shuffle(&mut rng);

    let mut assignment = vec![0usize; n];
    let n_pairs = match plan.kind {
        SplitKind::Holdout { holdout_fraction } => {
            if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
                return Err(CorpusError::InvalidPlan(format!(
                    "holdout fraction {holdout_fraction} not in (0, 1)"
                )));
            }
            let target = (holdout_fraction * n as f64).round() as usize;
            // 1 marks validation. Groups that would overshoot are skipped so that
            // smaller groups later in the shuffle can fill the remainder.
            let mut taken = 0;
            for bucket in &buckets {
                if taken == target {
                    break;
                }
                if taken + bucket.len() <= target {
                    for &i in bucket {
                        assignment[i] = 1;
                    }
                    taken += bucket.len();
                }
            }
            if taken != target {
                log::warn!("grouped holdout reached {taken} validation rows, wanted {target}");
            }
            1
        }
        SplitKind::GroupKfold { n_folds } => {
            if n_folds < 2 {
                return Err(CorpusError::InvalidPlan(format!(
                    "n_folds must be at least 2, got {n_folds}"
                )));
            }
            if buckets.len() < n_folds {
                return Err(CorpusError::TooFewGroups {
                    groups: buckets.len(),
                    folds: n_folds,
                });
            }
            // Largest groups first, each to the currently smallest fold.
            buckets.sort_by(|a, b| b.len().cmp(&a.len()));
            let mut sizes = vec![0usize; n_folds];
            for bucket in &buckets {
                let fold = (0..n_folds).min_by_key(|&f| (sizes[f], f)).unwrap();
                sizes[fold] += bucket.len();
                for &i in bucket {
                    assignment[i] = fold;
                }
            }
            n_folds
        }
    };

    let folds = match plan.kind {
        SplitKind::Holdout { .. } => vec![partition(&assignment, 1)],
        SplitKind::GroupKfold { .. } => (0..n_pairs).map(|f| partition(&assignment, f)).collect(),
    };
    Ok(folds)
}

fn partition(assignment: &[usize], validation_label: usize) -> Fold {
    let (validation, train): (Vec<usize>, Vec<usize>) =
        (0..assignment.len()).partition(|&i| assignment[i] == validation_label);
    Fold { train, validation }
}

/// Row count per group, useful for reporting duplicate structure.
pub fn group_sizes(corpus: &Corpus, key: GroupKey) -> HashMap<GroupId, usize> {
    let mut sizes = HashMap::new();
    for r in corpus.records() {
        *sizes.entry(group_key_of(r, key)).or_insert(0) += 1;
    }
    sizes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, body: &str) -> QuestionRecord {
        QuestionRecord {
            qa_id: id.into(),
            title: String::new(),
            body: body.into(),
            category: Category::Science,
            host: "example.stackexchange.com".into(),
        }
    }

    fn fixture_csv(rows: &[[f64; TARGET_COUNT]]) -> String {
        let mut out = Vec::new();
        let data: Vec<_> = rows
            .iter()
            .enumerate()
            .map(|(i, t)| {
                (
                    QuestionRecord {
                        qa_id: format!("q{i}"),
                        title: format!("title {i}"),
                        body: format!("body {i}"),
                        category: Category::Culture,
                        host: "english.stackexchange.com".into(),
                    },
                    TargetVector(*t),
                )
            })
            .collect();
        write_corpus_csv(&data, &mut out).unwrap();
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn constant_zero_targets_load() {
        let csv = fixture_csv(&[[0.0; TARGET_COUNT]; 3]);
        let c = parse_corpus(csv.as_bytes(), ColumnPolicy::Strict).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c.targets().iter().all(|t| t.values().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn out_of_range_names_row_and_column() {
        let mut rows = [[0.5; TARGET_COUNT]; 5];
        rows[2][4] = 1.3;
        let csv = fixture_csv(&rows);
        match parse_corpus(csv.as_bytes(), ColumnPolicy::Strict) {
            Err(CorpusError::TargetOutOfRange { row, column, value }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "question_has_commonly_accepted_answer");
                assert_eq!(value, 1.3);
            }
            other => panic!("unexpected {other:?}"),
        }
        let lenient = parse_corpus(csv.as_bytes(), ColumnPolicy::Lenient).unwrap();
        assert_eq!(lenient.len(), 4);
        assert_eq!(lenient.report().skipped, 1);
        assert_eq!(lenient.report().reasons["target_out_of_range"], 1);
    }

    #[test]
    fn answer_columns_and_body_critical_are_ignored() {
        let mut header: Vec<String> = vec![
            "qa_id",
            "question_title",
            "question_body",
            "question_user_name",
            "answer",
            "category",
            "host",
            "question_body_critical",
        ]
        .into_iter()
        .map(String::from)
        .collect();
        header.extend(TARGET_NAMES.iter().map(|n| format!("question_{n}")));
        header.push("answer_helpful".into());
        let mut line = vec![
            "7".to_string(),
            "T".into(),
            "B, with comma".into(),
            "u".into(),
            "an answer".into(),
            "LIFE_ARTS".into(),
            "cooking.stackexchange.com".into(),
            "0.9".into(),
        ];
        line.extend((0..TARGET_COUNT).map(|i| format!("{}", i as f64 / 20.0)));
        line.push("1.0".into());
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header).unwrap();
        w.write_record(&line).unwrap();
        let bytes = w.into_inner().unwrap();
        let c = parse_corpus(&bytes, ColumnPolicy::Strict).unwrap();
        let (rec, t) = c.row(0);
        assert_eq!(rec.qa_id, "7");
        assert_eq!(rec.body, "B, with comma");
        assert_eq!(rec.category, Category::LifeArts);
        assert_eq!(t.get("well_written"), Some(19.0 / 20.0));
    }

    #[test]
    fn strict_mode_requires_every_target() {
        let csv = "qa_id,question_title,question_body,category,host\n1,a,b,SCIENCE,h\n";
        match parse_corpus(csv.as_bytes(), ColumnPolicy::Strict) {
            Err(CorpusError::MissingColumn(c)) => {
                assert_eq!(c, "question_asker_intent_understanding")
            }
            other => panic!("unexpected {other:?}"),
        }
        // Lenient mode rejects every row instead, leaving nothing to load.
        assert!(matches!(
            parse_corpus(csv.as_bytes(), ColumnPolicy::Lenient),
            Err(CorpusError::Empty)
        ));
    }

    #[test]
    fn missing_feature_column_is_always_fatal() {
        let csv = "qa_id,question_title,category,host\n";
        assert!(matches!(
            parse_corpus(csv.as_bytes(), ColumnPolicy::Lenient),
            Err(CorpusError::MissingColumn(c)) if c == "question_body"
        ));
    }

    #[test]
    fn unknown_category_is_malformed() {
        let mut rows = fixture_csv(&[[0.1; TARGET_COUNT]; 2]);
        rows = rows.replacen("CULTURE", "GAMING", 1);
        assert!(matches!(
            parse_corpus(rows.as_bytes(), ColumnPolicy::Strict),
            Err(CorpusError::MalformedRow { row: 1, .. })
        ));
    }

    #[test]
    fn load_is_deterministic() {
        let csv = fixture_csv(&[[0.25; TARGET_COUNT]; 4]);
        let a = parse_corpus(csv.as_bytes(), ColumnPolicy::Strict).unwrap();
        let b = parse_corpus(csv.as_bytes(), ColumnPolicy::Strict).unwrap();
        assert_eq!(a.records(), b.records());
        assert_eq!(a.targets(), b.targets());
        assert_eq!(a.provenance(), b.provenance());
    }

    #[test]
    fn body_hash_normalizes_whitespace_and_case() {
        let a = group_key_of(&record("1", "a  b"), GroupKey::BodyHash);
        let b = group_key_of(&record("2", "A b"), GroupKey::BodyHash);
        assert_eq!(a, b);
        assert_eq!(
            group_key_of(&record("q42", "x"), GroupKey::QaId),
            GroupId::QaId("q42".into())
        );
    }

    #[test]
    fn body_hash_spot_check_collisions() {
        let keys: HashSet<_> = (0..100)
            .map(|i| group_key_of(&record("x", &format!("body number {i} {}", i * 7919)), GroupKey::BodyHash))
            .collect();
        assert!(keys.len() >= 99);
    }

    #[test]
    fn kfold_one_group_per_fold() {
        let groups: Vec<_> = (0..10).map(|i| GroupId::QaId(i.to_string())).collect();
        let folds = split_groups(&groups, &SplitPlan::group_kfold(10, 3)).unwrap();
        assert_eq!(folds.len(), 10);
        for f in &folds {
            assert_eq!(f.validation.len(), 1);
            assert_eq!(f.train.len(), 9);
        }
    }

    #[test]
    fn kfold_greedy_matches_best_balance() {
        let sizes = [5usize, 3, 2, 2];
        let groups: Vec<_> = sizes
            .iter()
            .enumerate()
            .flat_map(|(g, &s)| std::iter::repeat(GroupId::QaId(g.to_string())).take(s))
            .collect();
        let folds = split_groups(&groups, &SplitPlan::group_kfold(2, 0)).unwrap();
        let mut got: Vec<usize> = folds.iter().map(|f| f.validation.len()).collect();
        got.sort_unstable();

        // Enumerate every group-to-fold assignment.
        let mut best = usize::MAX;
        for mask in 0u32..(1 << sizes.len()) {
            let a: usize = (0..sizes.len()).filter(|&g| mask & (1 << g) != 0).map(|g| sizes[g]).sum();
            best = best.min(a.abs_diff(12 - a));
        }
        assert_eq!(got[1] - got[0], best);
        assert!(got == vec![5, 7] || got == vec![6, 6]);
        for f in &folds {
            let val: HashSet<_> = f.validation.iter().map(|&i| &groups[i]).collect();
            assert!(f.train.iter().all(|&i| !val.contains(&groups[i])));
        }
    }

    #[test]
    fn too_few_groups() {
        let groups = vec![GroupId::QaId("a".into()); 6];
        assert!(matches!(
            split_groups(&groups, &SplitPlan::group_kfold(2, 0)),
            Err(CorpusError::TooFewGroups { groups: 1, folds: 2 })
        ));
    }

    #[test]
    fn holdout_size_and_coverage() {
        let groups: Vec<_> = (0..6079).map(|i| GroupId::QaId(i.to_string())).collect();
        let folds = split_groups(&groups, &SplitPlan::holdout(0.2, 11)).unwrap();
        assert_eq!(folds.len(), 1);
        assert_eq!(folds[0].validation.len(), 1216);
        assert_eq!(folds[0].train.len() + folds[0].validation.len(), 6079);
    }

    #[test]
    fn grouped_holdout_keeps_duplicates_together() {
        // Each question body appears 1..=3 times, as when questions have several answers.
        let groups: Vec<_> = (0..500)
            .flat_map(|g| std::iter::repeat(GroupId::BodyHash(g)).take(1 + (g as usize * 7) % 3))
            .collect();
        let folds = split_groups(&groups, &SplitPlan::holdout(0.2, 5)).unwrap();
        let n = groups.len();
        assert_eq!(folds[0].validation.len(), (0.2 * n as f64).round() as usize);
        let val: HashSet<_> = folds[0].validation.iter().map(|&i| &groups[i]).collect();
        assert!(folds[0].train.iter().all(|&i| !val.contains(&groups[i])));
    }

    #[test]
    fn invalid_plans() {
        let groups: Vec<_> = (0..4).map(|i| GroupId::QaId(i.to_string())).collect();
        assert!(split_groups(&groups, &SplitPlan::holdout(1.0, 0)).is_err());
        assert!(split_groups(&groups, &SplitPlan::group_kfold(1, 0)).is_err());
    }

    #[test]
    fn split_plan_json_shape() {
        let plan = SplitPlan::group_kfold(5, 9);
        let v = serde_json::to_value(plan).unwrap();
        assert_eq!(v["kind"], "group_kfold");
        assert_eq!(v["n_folds"], 5);
        assert_eq!(v["group_key"], "body_hash");
        let back: SplitPlan = serde_json::from_value(v).unwrap();
        assert_eq!(back, plan);
    }
}

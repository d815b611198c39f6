//! Rank transform with min-max scaling, fitted per target column.

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::corpus::TARGET_COUNT;

/// Fitted state for one column: the distinct training values in ascending order
/// and the scaled average rank of each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransform {
    values: Vec<f64>,
    scaled: Vec<f64>,
    degenerate: bool,
}

impl ColumnTransform {
    /// Fits one column. A constant column is flagged degenerate and maps everything to 0.5.
    pub fn fit(column: &[f64]) -> Result<Self, TrainError> {
        if column.len() < 2 {
            return Err(TrainError::TooFewRows(column.len()));
        }
        if let Some(v) = column.iter().find(|v| !v.is_finite()) {
            return Err(TrainError::NonFinite(*v));
        }
        let mut sorted = column.to_vec();
        sorted.sort_by(f64::total_cmp);

        // Average 1-based rank of each run of equal values.
        let mut values = Vec::new();
        let mut ranks = Vec::new();
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            values.push(sorted[i]);
            ranks.push((i + 1 + j + 1) as f64 / 2.0);
            i = j + 1;
        }

        if values.len() == 1 {
            return Ok(ColumnTransform {
                values,
                scaled: vec![0.5],
                degenerate: true,
            });
        }
        let lo = ranks[0];
        let hi = ranks[ranks.len() - 1];
        let scaled = ranks.iter().map(|r| (r - lo) / (hi - lo)).collect();
        Ok(ColumnTransform {
            values,
            scaled,
            degenerate: false,
        })
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Maps a raw value into [0, 1]. Unseen values interpolate between the
    /// neighbouring training values; values outside the training range clamp.
    pub fn apply(&self, x: f64) -> f64 {
        let v = &self.values;
        match v.binary_search_by(|p| p.total_cmp(&x)) {
            Ok(i) => self.scaled[i],
            Err(0) => self.scaled[0],
            Err(i) if i == v.len() => self.scaled[v.len() - 1],
            Err(i) => {
                let frac = (x - v[i - 1]) / (v[i] - v[i - 1]);
                self.scaled[i - 1] + frac * (self.scaled[i] - self.scaled[i - 1])
            }
        }
    }

    /// The training value whose scaled rank is nearest to `y`. Ties go to the smaller value.
    pub fn invert(&self, y: f64) -> f64 {
        let s = &self.scaled;
        let i = s.partition_point(|&p| p < y);
        if i == 0 {
            return self.values[0];
        }
        if i == s.len() {
            return self.values[s.len() - 1];
        }
        if (y - s[i - 1]).abs() <= (s[i] - y).abs() {
            self.values[i - 1]
        } else {
            self.values[i]
        }
    }
}

/// Per-column rank transforms for all targets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TargetTransform {
    columns: Vec<ColumnTransform>,
}

impl TargetTransform {
    /// Indices of columns that were constant in the training data.
    pub fn degenerate_columns(&self) -> Vec<usize> {
        (0..self.columns.len()).filter(|&c| self.columns[c].degenerate).collect()
    }

    pub fn is_fitted(&self) -> bool {
        self.columns.len() == TARGET_COUNT
    }

    pub fn column(&self, c: usize) -> Option<&ColumnTransform> {
        self.columns.get(c)
    }

    pub fn apply(&self, targets: &[f64]) -> Result<Vec<f64>, TrainError> {
        self.map(targets, ColumnTransform::apply)
    }

    pub fn invert(&self, values: &[f64]) -> Result<Vec<f64>, TrainError> {
        self.map(values, ColumnTransform::invert)
    }

    fn map(&self, row: &[f64], f: fn(&ColumnTransform, f64) -> f64) -> Result<Vec<f64>, TrainError> {
        if !self.is_fitted() {
            return Err(TrainError::NotFitted);
        }
        if row.len() != TARGET_COUNT {
            return Err(TrainError::ShapeMismatch {
                expected: vec![TARGET_COUNT],
                found: vec![row.len()],
            });
        }
        Ok(self.columns.iter().zip(row).map(|(c, &x)| f(c, x)).collect())
    }
}

/// Fits every column of an N×20 target matrix independently.
pub fn fit_target_transform(rows: &[[f64; TARGET_COUNT]]) -> Result<TargetTransform, TrainError> {
    let mut columns = Vec::with_capacity(TARGET_COUNT);
    for c in 0..TARGET_COUNT {
        let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        let fitted = ColumnTransform::fit(&col)?;
        if fitted.degenerate {
            log::warn!("target column {c} is constant in the training rows; mapped to 0.5");
        }
        columns.push(fitted);
    }
    Ok(TargetTransform { columns })
}

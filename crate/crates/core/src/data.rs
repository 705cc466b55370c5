//! Regression datasets built from lagged time series.

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{fmt_f64, write_csv};
use crate::model::Normalization;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset is empty")]
    Empty,
    #[error("row {row}: expected {expected} columns, found {found}")]
    RowWidth { row: usize, expected: usize, found: usize },
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    BadNumber { row: usize, column: String, value: String },
    #[error("row {row}, column `{column}`: value is not finite")]
    NonFinite { row: usize, column: String },
    #[error("dataset needs at least one input column and a target column")]
    TooFewColumns,
    #[error("split fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Where a dataset came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub plant: String,
    pub scenario: String,
    pub input_names: Vec<String>,
    pub target_name: String,
}

/// Ordered `(input vector, target)` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub meta: DatasetMeta,
}

impl TimeSeriesDataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>, meta: DatasetMeta) -> Self {
        debug_assert_eq!(inputs.len(), targets.len());
        Self { inputs, targets, meta }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Number of input columns.
    pub fn arity(&self) -> usize {
        self.inputs.first().map_or(self.meta.input_names.len(), Vec::len)
    }

    pub fn samples(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.inputs.iter().map(Vec::as_slice).zip(self.targets.iter().copied())
    }

    /// Chronological split: the first `fraction` of samples, then the rest.
    pub fn split(&self, fraction: f64) -> Result<(Self, Self), DataError> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(DataError::BadFraction(fraction));
        }
        let cut = (self.len() as f64 * fraction).round() as usize;
        let head = Self::new(self.inputs[..cut].to_vec(), self.targets[..cut].to_vec(), self.meta.clone());
        let tail = Self::new(self.inputs[cut..].to_vec(), self.targets[cut..].to_vec(), self.meta.clone());
        Ok((head, tail))
    }

    /// Map into the unit ranges of `norm`.
    pub fn normalized(&self, norm: &Normalization) -> Self {
        Self::new(
            self.inputs.iter().map(|x| norm.normalize_input(x)).collect(),
            self.targets.iter().map(|&y| norm.normalize_output(y)).collect(),
            self.meta.clone(),
        )
    }

    fn header(&self) -> Vec<String> {
        let mut header: Vec<String> = if self.meta.input_names.len() == self.arity() {
            self.meta.input_names.clone()
        } else {
            (0..self.arity()).map(|j| format!("x{j}")).collect()
        };
        header.push(if self.meta.target_name.is_empty() { "target".into() } else { self.meta.target_name.clone() });
        header
    }

    /// CSV with one named column per input and the target last.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), DataError> {
        let header = self.header();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = self.samples().map(|(x, y)| x.iter().chain([&y]).map(|&v| fmt_f64(v)).collect());
        write_csv(writer, &header, rows)?;
        Ok(())
    }

    /// Read the format of [`write_csv`](Self::write_csv). Row numbers in errors
    /// count the header as row 1.
    pub fn read_csv<R: io::Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr =
            csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.len() < 2 {
            return Err(DataError::TooFewColumns);
        }
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let row = i + 2;
            let record = record?;
            if record.len() != header.len() {
                return Err(DataError::RowWidth { row, expected: header.len(), found: record.len() });
            }
            let mut values = Vec::with_capacity(header.len());
            for (field, column) in record.iter().zip(&header) {
                let v: f64 = field.parse().map_err(|_| DataError::BadNumber {
                    row,
                    column: column.clone(),
                    value: field.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(DataError::NonFinite { row, column: column.clone() });
                }
                values.push(v);
            }
            targets.push(values.pop().expect("at least two columns"));
            inputs.push(values);
        }
        if targets.is_empty() {
            return Err(DataError::Empty);
        }
        let (target_name, input_names) = header.split_last().expect("at least two columns");
        let meta = DatasetMeta {
            plant: String::new(),
            scenario: String::new(),
            input_names: input_names.to_vec(),
            target_name: target_name.clone(),
        };
        Ok(Self::new(inputs, targets, meta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> TimeSeriesDataset {
        let inputs = (0..10).map(|k| vec![k as f64, 0.1 * k as f64]).collect();
        let targets = (0..10).map(|k| k as f64 + 1.0).collect();
        TimeSeriesDataset::new(inputs, targets, DatasetMeta::default())
    }

    #[test]
    fn split_is_chronological() {
        let (a, b) = toy().split(0.6).unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!(b.len(), 4);
        assert_eq!(b.inputs[0][0], 6.0);
        assert!(toy().split(1.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let ds = toy();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x0,x1,target\n"));
        let back = TimeSeriesDataset::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.inputs, ds.inputs);
        assert_eq!(back.targets, ds.targets);
    }

    #[test]
    fn csv_errors_carry_row_numbers() {
        let err = TimeSeriesDataset::read_csv("a,b\n1,2\n3,oops\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::BadNumber { row: 3, .. }), "{err}");
        assert!(TimeSeriesDataset::read_csv("a,b\n".as_bytes()).is_err());
        assert!(TimeSeriesDataset::read_csv("a\n1\n".as_bytes()).is_err());
    }
}

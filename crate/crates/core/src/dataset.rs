//! Tabular ingestion: CSV loading, numeric column selection, binary label
//! extraction, column statistics and a seeded synthetic generator.

use std::collections::HashSet;
use std::fs::File;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),
    #[error("non-numeric cell {value:?} at row {row}, column `{column}`")]
    NonNumericCell {
        /// 1-based data row (header excluded).
        row: usize,
        column: String,
        value: String,
    },
    #[error("missing cell at row {row}, column `{column}` (use mean imputation to fill)")]
    MissingCell { row: usize, column: String },
    #[error("unrecognised label {value:?} at row {row}")]
    BadLabel { row: usize, value: String },
    #[error("no numeric columns remain after filtering")]
    EmptyAfterFilter,
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("invalid synthetic parameters: {0}")]
    InvalidSynthParams(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl DataError {
    pub fn is_io(&self) -> bool {
        match self {
            DataError::Io(_) => true,
            DataError::Csv(e) => matches!(e.kind(), csv::ErrorKind::Io(_)),
            _ => false,
        }
    }
}

/// Row-major numeric table with one binary label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    labels: Vec<u8>,
    column_names: Vec<String>,
    rows: usize,
    cols: usize,
}

impl Dataset {
    pub fn new(
        values: Vec<f64>,
        labels: Vec<u8>,
        column_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let cols = column_names.len();
        let rows = labels.len();
        if values.len() != rows * cols {
            return Err(DataError::Shape(format!(
                "{} values for {rows} rows x {cols} columns",
                values.len()
            )));
        }
        if let Some(pos) = labels.iter().position(|&l| l > 1) {
            return Err(DataError::BadLabel {
                row: pos + 1,
                value: labels[pos].to_string(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonNumericCell {
                row: pos / cols.max(1) + 1,
                column: column_names[pos % cols.max(1)].clone(),
                value: values[pos].to_string(),
            });
        }
        Ok(Self {
            values,
            labels,
            column_names,
            rows,
            cols,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    /// Number of rows labelled 1.
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Writes the table back out as CSV with the label as the last column.
    /// Floats use the shortest representation that re-parses exactly.
    pub fn write_csv(&self, path: impl AsRef<Path>, label_column: &str) -> Result<(), DataError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self.column_names.iter().map(String::as_str).collect();
        header.push(label_column);
        w.write_record(&header)?;
        for i in 0..self.rows {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.labels[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub label_column: String,
    pub drop_columns: Vec<String>,
    /// Fill empty cells with the column mean instead of failing.
    pub impute_mean: bool,
}

impl LoadOptions {
    pub fn new(label_column: impl Into<String>) -> Self {
        Self {
            label_column: label_column.into(),
            ..Self::default()
        }
    }
}

/// Parses a boolean-like label: `0/1`, `true/false`, `yes/no`, all
/// case-insensitive and with an optional trailing period (`True.`).
pub fn parse_label(raw: &str) -> Option<u8> {
    let t = raw.trim();
    let t = t.strip_suffix('.').unwrap_or(t).to_ascii_lowercase();
    match t.as_str() {
        "1" | "true" | "yes" => Some(1),
        "0" | "false" | "no" => Some(0),
        other => match other.parse::<f64>() {
            Ok(1.0) => Some(1),
            Ok(0.0) => Some(0),
            _ => None,
        },
    }
}

fn parse_number(raw: &str) -> Option<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Loads a headed CSV file.
///
/// Columns named in `drop_columns` are removed first. Of the rest, a column
/// is kept as numeric when more than half of its non-empty cells parse as
/// finite numbers; any other column is treated as categorical and skipped.
/// Inside a kept column every non-empty cell must parse, otherwise
/// [`DataError::NonNumericCell`] names the offending cell.
pub fn load_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset, DataError> {
    let file = File::open(path)?;
    read_csv(file, opts)
}

pub fn read_csv<R: io::Read>(reader: R, opts: &LoadOptions) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let wanted = opts.label_column.trim();
    let label_idx = header
        .iter()
        .position(|h| h == wanted)
        .or_else(|| header.iter().position(|h| h.eq_ignore_ascii_case(wanted)))
        .ok_or_else(|| DataError::MissingLabelColumn(opts.label_column.clone()))?;

    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(DataError::RaggedRow {
                row: i + 1,
                found: rec.len(),
                expected: header.len(),
            });
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(DataError::EmptyDataset);
    }

    let dropped: HashSet<&str> = opts.drop_columns.iter().map(|s| s.trim()).collect();
    let candidates: Vec<usize> = (0..header.len())
        .filter(|&c| c != label_idx && !dropped.contains(header[c].as_str()))
        .collect();

    let numeric: Vec<usize> = candidates
        .into_iter()
        .filter(|&c| {
            let (mut filled, mut parsed) = (0usize, 0usize);
            for rec in &records {
                let cell = rec[c].trim();
                if !cell.is_empty() {
                    filled += 1;
                    if parse_number(cell).is_some() {
                        parsed += 1;
                    }
                }
            }
            filled > 0 && 2 * parsed > filled
        })
        .collect();
    if numeric.is_empty() {
        return Err(DataError::EmptyAfterFilter);
    }

    let rows = records.len();
    let cols = numeric.len();
    let mut values = vec![0.0; rows * cols];
    let mut missing: Vec<(usize, usize)> = Vec::new();
    let mut labels = Vec::with_capacity(rows);
    for (r, rec) in records.iter().enumerate() {
        let raw_label = &rec[label_idx];
        labels.push(parse_label(raw_label).ok_or_else(|| DataError::BadLabel {
            row: r + 1,
            value: raw_label.to_string(),
        })?);
        for (j, &c) in numeric.iter().enumerate() {
            let cell = rec[c].trim();
            if cell.is_empty() {
                if !opts.impute_mean {
                    return Err(DataError::MissingCell {
                        row: r + 1,
                        column: header[c].clone(),
                    });
                }
                missing.push((r, j));
                continue;
            }
            values[r * cols + j] = parse_number(cell).ok_or_else(|| DataError::NonNumericCell {
                row: r + 1,
                column: header[c].clone(),
                value: cell.to_string(),
            })?;
        }
    }

    if !missing.is_empty() {
        let mut sums = vec![0.0; cols];
        let mut counts = vec![0usize; cols];
        let mut is_missing = vec![false; rows * cols];
        for &(r, j) in &missing {
            is_missing[r * cols + j] = true;
        }
        for (k, v) in values.iter().enumerate() {
            if !is_missing[k] {
                sums[k % cols] += v;
                counts[k % cols] += 1;
            }
        }
        for (r, j) in missing {
            // A column with a majority of parsed cells always has counts > 0.
            values[r * cols + j] = sums[j] / counts[j] as f64;
        }
    }

    let column_names = numeric.iter().map(|&c| header[c].clone()).collect();
    Dataset::new(values, labels, column_names)
}

/// Per-column and dataset-wide extrema; the global pair supplies the
/// `x_min`/`x_max` constants of the pixel mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub mean: Vec<f64>,
    pub global_min: f64,
    pub global_max: f64,
}

/// Single pass over the rows.
pub fn compute_stats(d: &Dataset) -> Result<ColumnStats, DataError> {
    if d.rows() == 0 || d.cols() == 0 {
        return Err(DataError::EmptyDataset);
    }
    let cols = d.cols();
    let mut min = vec![f64::INFINITY; cols];
    let mut max = vec![f64::NEG_INFINITY; cols];
    let mut sum = vec![0.0; cols];
    for i in 0..d.rows() {
        for (j, &v) in d.row(i).iter().enumerate() {
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
            sum[j] += v;
        }
    }
    let n = d.rows() as f64;
    // Summation rounding can push the mean a hair outside [min, max].
    let mean = (0..cols)
        .map(|j| (sum[j] / n).clamp(min[j], max[j]))
        .collect();
    let global_min = min.iter().copied().fold(f64::INFINITY, f64::min);
    let global_max = max.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ColumnStats {
        min,
        max,
        mean,
        global_min,
        global_max,
    })
}

/// Two Gaussian clusters with unit variance: class 0 centred at the origin,
/// class 1 at `separation` in every coordinate. Labels alternate 0,1,0,1,...
/// so the classes are balanced to within one row.
pub fn synth_churn(rows: usize, cols: usize, seed: u64, separation: f64) -> Result<Dataset, DataError> {
    if rows < 2 || cols < 1 {
        return Err(DataError::InvalidSynthParams(format!(
            "need rows >= 2 and cols >= 1, got {rows}x{cols}"
        )));
    }
    if separation < 0.0 || !separation.is_finite() {
        return Err(DataError::InvalidSynthParams(format!(
            "separation must be a finite value >= 0, got {separation}"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let mut values = Vec::with_capacity(rows * cols);
    let mut labels = Vec::with_capacity(rows);
    for i in 0..rows {
        let label = (i % 2) as u8;
        let shift = if label == 1 { separation } else { 0.0 };
        for _ in 0..cols {
            values.push(rng.normal() + shift);
        }
        labels.push(label);
    }
    let names = (0..cols).map(|j| format!("x{j}")).collect();
    Dataset::new(values, labels, names)
}

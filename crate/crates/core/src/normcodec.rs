//! Invertible min-max pixel normalization.
//!
//! A value `x` is mapped onto the target interval `[a, b]` by
//!
//! ```text
//! x' = a + (x - x_min) * (b - a) / (x_max - x_min)
//! ```
//!
//! and recovered by the inverse affine map. With `(a, b) = (0, 255)` the
//! normalized matrix becomes an 8-bit grayscale image whose rows are records
//! and whose columns are attributes.
//!
//! The continuous [`NormMatrix`] is lossless given its [`NormParams`]. The
//! quantized [`GrayImage`] is not: each pixel is rounded half away from zero,
//! so a reconstructed value can be off by at most half a quantization step,
//! `(x_max - x_min) / 510`, plus floating-point rounding.
//!
//! A degenerate span (`x_max == x_min`) maps every affected value to `a` and
//! is listed in [`NormParams::degenerate_columns`]; inversion returns `x_min`.

use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::imageio::GrayImage;

pub const PIXEL_MIN: f64 = 0.0;
pub const PIXEL_MAX: f64 = 255.0;

/// Fixed layout of the image: one row per record.
pub const ORIENTATION: &str = "rows=records,cols=attributes";

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("cannot normalize an empty dataset")]
    EmptyDataset,
    #[error("target interval [{a}, {b}] is invalid (need finite a < b)")]
    InvalidInterval { a: f64, b: f64 },
    #[error("quantization requires the interval [0, 255], params have [{a}, {b}]")]
    IntervalMismatch { a: f64, b: f64 },
    #[error("malformed normalization params: {0}")]
    MalformedParams(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("sidecar json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NormMode {
    /// One `(x_min, x_max)` pair for the whole table.
    #[default]
    Global,
    /// Independent bounds per column.
    PerColumn,
}

/// Everything needed to invert the mapping; serialized as the
/// `<image>.norm.json` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub x_min: f64,
    pub x_max: f64,
    pub a: f64,
    pub b: f64,
    pub mode: NormMode,
    pub per_column_bounds: Option<Vec<(f64, f64)>>,
    pub rows: usize,
    pub cols: usize,
    pub degenerate_columns: Vec<usize>,
    #[serde(default = "default_orientation")]
    pub orientation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_names: Option<Vec<String>>,
}

fn default_orientation() -> String {
    ORIENTATION.to_string()
}

#[inline]
fn forward(x: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi == lo {
        a
    } else {
        a + (x - lo) * (b - a) / (hi - lo)
    }
}

#[inline]
fn inverse(y: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi == lo {
        lo
    } else {
        lo + (y - a) * (hi - lo) / (b - a)
    }
}

impl NormParams {
    /// Computes bounds from a row-major `rows x cols` buffer.
    pub fn fit(
        values: &[f64],
        rows: usize,
        cols: usize,
        mode: NormMode,
        a: f64,
        b: f64,
    ) -> Result<Self, CodecError> {
        if rows == 0 || cols == 0 {
            return Err(CodecError::EmptyDataset);
        }
        if values.len() != rows * cols {
            return Err(CodecError::ShapeMismatch(format!(
                "{} values for {rows}x{cols}",
                values.len()
            )));
        }
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(CodecError::InvalidInterval { a, b });
        }
        let mut col_min = vec![f64::INFINITY; cols];
        let mut col_max = vec![f64::NEG_INFINITY; cols];
        for row in values.chunks_exact(cols) {
            for (j, &v) in row.iter().enumerate() {
                col_min[j] = col_min[j].min(v);
                col_max[j] = col_max[j].max(v);
            }
        }
        let x_min = col_min.iter().copied().fold(f64::INFINITY, f64::min);
        let x_max = col_max.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (per_column_bounds, degenerate_columns) = match mode {
            NormMode::Global => {
                let degenerate = if x_max == x_min {
                    (0..cols).collect()
                } else {
                    Vec::new()
                };
                (None, degenerate)
            }
            NormMode::PerColumn => {
                let bounds: Vec<(f64, f64)> = col_min.into_iter().zip(col_max).collect();
                let degenerate = bounds
                    .iter()
                    .enumerate()
                    .filter(|(_, (lo, hi))| lo == hi)
                    .map(|(j, _)| j)
                    .collect();
                (Some(bounds), degenerate)
            }
        };
        Ok(Self {
            x_min,
            x_max,
            a,
            b,
            mode,
            per_column_bounds,
            rows,
            cols,
            degenerate_columns,
            orientation: default_orientation(),
            column_names: None,
        })
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        let bad = |m: String| Err(CodecError::MalformedParams(m));
        if !(self.a.is_finite() && self.b.is_finite() && self.a < self.b) {
            return bad(format!("need a < b, got [{}, {}]", self.a, self.b));
        }
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_min <= self.x_max) {
            return bad(format!("need x_min <= x_max, got [{}, {}]", self.x_min, self.x_max));
        }
        match (&self.mode, &self.per_column_bounds) {
            (NormMode::Global, Some(_)) => bad("global mode must not carry per-column bounds".into()),
            (NormMode::PerColumn, None) => bad("per-column mode requires per-column bounds".into()),
            (NormMode::PerColumn, Some(bounds)) => {
                if bounds.len() != self.cols {
                    return bad(format!("{} column bounds for {} columns", bounds.len(), self.cols));
                }
                if let Some(j) = bounds
                    .iter()
                    .position(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi))
                {
                    return bad(format!("column {j} bounds are not an ordered finite pair"));
                }
                Ok(())
            }
            (NormMode::Global, None) => Ok(()),
        }
    }

    /// `(min, max)` used for column `j`.
    pub fn column_bounds(&self, j: usize) -> (f64, f64) {
        match &self.per_column_bounds {
            Some(bounds) => bounds[j],
            None => (self.x_min, self.x_max),
        }
    }

    pub fn is_quantizable(&self) -> bool {
        self.a == PIXEL_MIN && self.b == PIXEL_MAX
    }

    fn check_quantizable(&self) -> Result<(), CodecError> {
        if self.is_quantizable() {
            Ok(())
        } else {
            Err(CodecError::IntervalMismatch {
                a: self.a,
                b: self.b,
            })
        }
    }

    fn apply_row(&self, src: &[f64], dst: &mut [f64]) {
        for (j, (s, d)) in src.iter().zip(dst.iter_mut()).enumerate() {
            let (lo, hi) = self.column_bounds(j);
            *d = forward(*s, lo, hi, self.a, self.b);
        }
    }

    /// Forward map over a row-major buffer shaped like the fitted data.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        for (src, dst) in values.chunks(self.cols).zip(out.chunks_mut(self.cols)) {
            self.apply_row(src, dst);
        }
        out
    }

    /// Same as [`apply`](Self::apply) with rows split across the rayon pool.
    /// The map is element-independent, so the output is bit-identical.
    pub fn apply_parallel(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        let rows_per_task = (values.len() / self.cols.max(1) / (4 * rayon::current_num_threads())).max(1);
        let chunk = rows_per_task * self.cols;
        out.par_chunks_mut(chunk)
            .zip(values.par_chunks(chunk))
            .for_each(|(dst, src)| {
                for (s, d) in src.chunks(self.cols).zip(dst.chunks_mut(self.cols)) {
                    self.apply_row(s, d);
                }
            });
        out
    }

    /// Inverse map over a row-major buffer of normalized values.
    pub fn invert(&self, normalized: &[f64]) -> Vec<f64> {
        normalized
            .iter()
            .enumerate()
            .map(|(k, &y)| {
                let (lo, hi) = self.column_bounds(k % self.cols);
                inverse(y, lo, hi, self.a, self.b)
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String, CodecError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, CodecError> {
        let p: Self = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn write_sidecar(&self, path: impl AsRef<Path>) -> Result<(), CodecError> {
        let mut s = self.to_json()?;
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }

    pub fn read_sidecar(path: impl AsRef<Path>) -> Result<Self, CodecError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Normalized values together with the parameters that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct NormMatrix {
    pub values: Vec<f64>,
    pub params: NormParams,
    pub rows: usize,
    pub cols: usize,
}

impl NormMatrix {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

pub fn normalize(d: &Dataset, mode: NormMode, a: f64, b: f64) -> Result<NormMatrix, CodecError> {
    let mut n = normalize_values(d.values(), d.rows(), d.cols(), mode, a, b)?;
    n.params.column_names = Some(d.column_names().to_vec());
    Ok(n)
}

pub fn normalize_values(
    values: &[f64],
    rows: usize,
    cols: usize,
    mode: NormMode,
    a: f64,
    b: f64,
) -> Result<NormMatrix, CodecError> {
    let params = NormParams::fit(values, rows, cols, mode, a, b)?;
    Ok(NormMatrix {
        values: params.apply(values),
        params,
        rows,
        cols,
    })
}

pub fn denormalize(n: &NormMatrix) -> Result<Vec<f64>, CodecError> {
    n.params.validate()?;
    if n.values.len() != n.rows * n.cols || n.cols != n.params.cols {
        return Err(CodecError::ShapeMismatch(format!(
            "{} values for {}x{} (params say {} columns)",
            n.values.len(),
            n.rows,
            n.cols,
            n.params.cols
        )));
    }
    Ok(n.params.invert(&n.values))
}

/// Rounds half away from zero and clamps to `[0, 255]`.
pub fn quantize_value(v: f64) -> u8 {
    v.round().clamp(PIXEL_MIN, PIXEL_MAX) as u8
}

/// Height is the record count, width the attribute count.
pub fn quantize(n: &NormMatrix) -> Result<GrayImage, CodecError> {
    n.params.check_quantizable()?;
    let pixels = n.values.iter().map(|&v| quantize_value(v)).collect();
    GrayImage::new(n.cols, n.rows, pixels).map_err(|e| CodecError::ShapeMismatch(e.to_string()))
}

pub fn dequantize(img: &GrayImage, params: &NormParams) -> Result<Vec<f64>, CodecError> {
    params.validate()?;
    params.check_quantizable()?;
    if img.width() != params.cols || img.height() != params.rows {
        return Err(CodecError::ShapeMismatch(format!(
            "image is {}x{}, params describe {}x{}",
            img.width(),
            img.height(),
            params.cols,
            params.rows
        )));
    }
    let as_real: Vec<f64> = img.pixels().iter().map(|&p| f64::from(p)).collect();
    Ok(params.invert(&as_real))
}

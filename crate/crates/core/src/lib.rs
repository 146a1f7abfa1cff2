//! Pixel normalization of numeric tables.
//!
//! Numeric tabular data is min-max scaled into the 8-bit grayscale range and
//! stored as a PGM image (one row per record, one column per attribute),
//! with a JSON sidecar that makes the mapping invertible. A small
//! pattern-recognition network trained by scaled conjugate gradient
//! classifies the records, and the evaluation module reproduces the usual
//! confusion / ROC / error-histogram reporting.
//!
//! Module map:
//!
//! - [`dataset`]: CSV ingestion, column statistics, synthetic data
//! - [`normcodec`]: forward/inverse min-max mapping and 8-bit quantization
//! - [`imageio`]: PGM `P5` files and surface-plot export
//! - [`mlp`]: the network and its SCG trainer
//! - [`evaluation`]: splits, metrics and the report bundle
//! - [`bench`]: serial vs. parallel timing of the normalization kernel
//! - [`pipeline`]: the end-to-end experiment
//! - [`cli`]: the `pixnorm` command-line front end

pub mod bench;
pub mod cli;
pub mod dataset;
pub mod evaluation;
pub mod imageio;
pub mod mlp;
pub mod normcodec;
pub mod pipeline;
pub mod rng;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] dataset::DataError),
    #[error(transparent)]
    Codec(#[from] normcodec::CodecError),
    #[error(transparent)]
    Image(#[from] imageio::ImageError),
    #[error(transparent)]
    Model(#[from] mlp::MlpError),
    #[error(transparent)]
    Eval(#[from] evaluation::EvalError),
    #[error(transparent)]
    Bench(#[from] bench::BenchError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Process exit codes, one per error family.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const IO: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        use exit_code::*;
        match self {
            Error::Usage(_) => USAGE,
            Error::Io(_) => IO,
            Error::Json(_) => DATA,
            Error::Data(e) if e.is_io() => IO,
            Error::Data(_) => DATA,
            Error::Codec(normcodec::CodecError::Io(_)) => IO,
            Error::Codec(_) => DATA,
            Error::Image(imageio::ImageError::Io(_)) => IO,
            Error::Image(_) => DATA,
            Error::Model(mlp::MlpError::NonFiniteLoss { .. }) => NUMERIC,
            Error::Model(_) => DATA,
            Error::Eval(evaluation::EvalError::Io(_)) => IO,
            Error::Eval(evaluation::EvalError::Model(mlp::MlpError::NonFiniteLoss { .. })) => NUMERIC,
            Error::Eval(_) => DATA,
            Error::Bench(bench::BenchError::Codec(_) | bench::BenchError::OutputMismatch(_)) => NUMERIC,
            Error::Bench(_) => USAGE,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

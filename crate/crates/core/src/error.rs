// SPDX-License-Identifier: MIT OR Apache-2.0

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid probability grid: {0}")]
    InvalidGrid(String),

    #[error("quantile functions live on different probability grids")]
    GridMismatch,

    #[error("expected {expected} values on the grid, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value at position {index}")]
    NonFinite { index: usize },

    #[error("quantile values decrease at grid position {index} ({prev} > {next})")]
    NotMonotone { index: usize, prev: f64, next: f64 },

    #[error("sample set is empty")]
    EmptySamples,

    #[error("kernel smoothing needs at least two distinct samples")]
    DegenerateSamples,

    #[error("window is empty")]
    EmptyWindow,

    #[error("quantile function is not strictly increasing at grid position {index}")]
    NotStrictlyIncreasing { index: usize },

    #[error("sequence of length {n} is too short for bandwidth {bandwidth} (need n >= {required})")]
    SequenceTooShort {
        n: usize,
        bandwidth: usize,
        required: usize,
    },

    #[error("n/G = {ratio:.4} must exceed e for the critical value to exist")]
    RatioTooSmall { ratio: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid change points: {0}")]
    InvalidChangePoints(String),

    #[error("sequence {0} has no time labels")]
    MissingTimeLabels(usize),

    #[error("time labels must be strictly increasing")]
    UnorderedTimeLabels,

    #[error("requested length {requested} exceeds the {available} generated elements")]
    LengthExceedsData { requested: usize, available: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

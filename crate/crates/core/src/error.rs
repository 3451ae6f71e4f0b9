use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: key `{key}`: {msg}")]
    ConfigParse {
        path: PathBuf,
        line: usize,
        key: String,
        msg: String,
    },

    #[error("empty sample list")]
    EmptySamples,

    #[error("vector length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("correlation undefined for a zero-norm channel")]
    ZeroNorm,

    #[error("position ({x:.3}, {y:.3}) lies outside the coordination cluster")]
    OutOfCluster { x: f64, y: f64 },

    #[error("cell {cell} has {available} candidates, {required} required")]
    NotEnoughUsers {
        cell: usize,
        available: usize,
        required: usize,
    },

    #[error("brute-force search needs {combinations} combinations, limit is {limit}")]
    EnumerationLimit { combinations: u128, limit: u128 },

    #[error("missing channel for user {user} at BS {bs}")]
    MissingChannel { user: usize, bs: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("linear solve failed: {0}")]
    Solve(&'static str),

    #[error("malformed map file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

//! Error type shared by the whole crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension must be 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("grid size must be a power of two >= 8, got {0}")]
    BadGridSize(usize),
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("time grids do not match")]
    TimeGridMismatch,
    #[error("ball family has no balls")]
    EmptyFamily,
    #[error("probe sets must be disjoint with positive separation")]
    OverlappingSets,
    #[error("search direction has zero norm")]
    DegenerateDirection,
    #[error("set must be a nonempty proper subset of the grid")]
    BadDomain,
    #[error("parameter {what} out of admissible range: {detail}")]
    BadParameter { what: &'static str, detail: String },
    #[error("unknown field kind '{0}' (expected random, taylor-green, gradient, solenoidal)")]
    UnknownFieldKind(String),
    #[error("unknown experiment '{name}'; available: {available}")]
    UnknownExperiment { name: String, available: String },
    #[error("scale factor must be a (possibly negative) power of two with |log2| <= log2(N), got {0}")]
    BadScale(f64),
    #[error("kernel probe requires sqrt(t) <= box/8 (got sqrt(t) = {st}, box = {l})")]
    KernelScaleTooLarge { st: f64, l: f64 },
    #[error("malformed field file: {0}")]
    BadFieldFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

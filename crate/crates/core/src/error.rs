use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid output index {index} (model has {outputs} outputs)")]
    InvalidOutput { index: usize, outputs: usize },

    #[error("moment matrix violates the exponent constraint: {0}")]
    ConstraintViolation(String),

    #[error("quadrature window too small: boundary mass {boundary_mass:.3e} exceeds {tolerance:.1e}")]
    WindowTooSmall { boundary_mass: f64, tolerance: f64 },

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("non-finite covariance entry for outputs ({d}, {d_prime}) at points ({n}, {m}): {value}")]
    NonFinite {
        d: usize,
        d_prime: usize,
        n: usize,
        m: usize,
        value: f64,
    },

    #[error("non-finite mean entry for output {d} at point {n}: {value}")]
    NonFiniteMean { d: usize, n: usize, value: f64 },

    #[error(
        "Cholesky factorisation failed after jitter {max_jitter:.3e} (size {size}, trace {trace:.3e}, min diagonal {min_diagonal:.3e})"
    )]
    Cholesky {
        size: usize,
        trace: f64,
        min_diagonal: f64,
        max_jitter: f64,
    },

    #[error("empty dataset: {0}")]
    EmptyData(String),

    #[error("test targets for output {0} have zero variance; NMSE undefined")]
    ZeroVariance(usize),

    #[error("all {} restarts failed: {}", .0.len(), .0.join("; "))]
    AllRestartsFailed(Vec<String>),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the slab transport routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    Domain(String),

    #[error("invalid cross-sections: {0}")]
    CrossSections(String),

    #[error("invalid random field spec: {0}")]
    RandomField(String),

    #[error("invalid quadrature request: {0}")]
    Quadrature(String),

    #[error("argument out of range: {0}")]
    Argument(String),

    #[error("length mismatch for {what}: expected {expected}, got {actual}")]
    Length {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("kernel quadrature for entry ({row}, {col}) did not reach tolerance within {panels} panels (estimate {estimate:e}, error {error:e})")]
    KernelQuadrature {
        row: usize,
        col: usize,
        panels: usize,
        estimate: f64,
        error: f64,
    },

    #[error("operator is not symmetric: max asymmetry {asymmetry:e} exceeds {tolerance:e}")]
    Asymmetric { asymmetry: f64, tolerance: f64 },

    #[error("symmetric eigensolver failed: {0}")]
    Eigen(String),

    #[error("linear system is singular to working precision: {0}")]
    Singular(String),

    #[error("power iteration stalled after {iterations} iterations: estimate {estimate}, residual {residual:e}")]
    PowerIteration {
        iterations: usize,
        estimate: f64,
        residual: f64,
    },

    #[error(
        "source iteration did not converge in {iterations} sweeps (last difference {difference:e})"
    )]
    NotConverged { iterations: usize, difference: f64 },

    #[error("sample {index} failed: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

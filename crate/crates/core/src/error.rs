use thiserror::Error;

/// Errors surfaced by the library. Numerical failures carry enough context
/// (sample index, iteration step) to diagnose a run from the CLI report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: operator is {expected}, vector is {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("unsupported matrix market field: {0}")]
    UnsupportedField(String),

    #[error("matrix is not symmetric: max asymmetry {gap:.3e} exceeds tolerance {tol:.3e}")]
    NotSymmetric { gap: f64, tol: f64 },

    #[error("invalid CSR structure: {0}")]
    InvalidStructure(String),

    #[error("eigensolver failed to converge at index {index} after {iterations} iterations")]
    NonConvergence { index: usize, iterations: usize },

    #[error("eigenvector matrix is numerically rank-deficient (defective Hessenberg section); try a different sample vector or k")]
    DefectiveMatrix,

    #[error("starting vector has zero norm")]
    ZeroStartVector,

    #[error("NaN encountered at Krylov step {step}")]
    NanDetected { step: usize },

    #[error("sample {sample}: {source}")]
    SampleFailed {
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no exact oracle applies: {0}")]
    OracleUnavailable(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the numerical kernels, the tree builder and the drivers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the operation's domain (bad mode index, bad
    /// boundary tag, nonpositive step, ...).
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    /// A dense oracle was asked to materialize more entries than allowed.
    #[error("oracle size {size} exceeds cap {cap}")]
    OracleCap { size: usize, cap: usize },

    /// Singular or ill-conditioned shifted operator, non-finite evaluation,
    /// non-converging factorization.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Broken tree invariants (missing child mapping, empty level, ...).
    #[error("tree structure: {0}")]
    Structural(String),

    /// The step size hypothesis `dt * mu < 1` of the error estimate fails.
    #[error("error-bound hypothesis violated: dt * mu = {product} is not < 1")]
    Hypothesis { product: f64 },

    #[error("configuration: {0}")]
    Config(String),

    /// A node-storage or size cap was reached while building a tree.
    #[error("resource cap reached at level {level}: {detail}")]
    ResourceCap { level: usize, detail: String },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("format: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn mismatch(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::DimensionMismatch {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

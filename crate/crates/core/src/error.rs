use thiserror::Error;

/// Errors raised by the library. Every public fallible operation returns this type.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry in matrix {matrix} at ({row}, {col})")]
    NonFinite { matrix: usize, row: usize, col: usize },

    #[error("operation requires a nonzero tensor")]
    ZeroTensor,

    #[error("invalid type (p, q) = ({p}, {q}): {reason}")]
    InvalidType { p: usize, q: usize, reason: String },

    #[error("singular group element: {0}")]
    Singular(String),

    #[error("tensor is not an eigenvector of its q-moment (residual {residual:e})")]
    NotEigen { residual: f64 },

    #[error("eigenvalue {0} is not positive")]
    NonPositiveEigenvalue(f64),

    #[error("adjoin needs at least one tuple")]
    EmptyAdjoin,

    #[error("unknown block name `{0}`")]
    UnknownBlock(String),

    #[error("invalid family spec: {0}")]
    InvalidFamily(String),

    #[error("unsupported parameters: {0}")]
    Unsupported(String),

    #[error("non-finite value during flow at iteration {0}")]
    FlowNonFinite(usize),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("malformed tensor document: {0}")]
    Format(String),

    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    /// True for failures to read or write files, as opposed to bad input.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

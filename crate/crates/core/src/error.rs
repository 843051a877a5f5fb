use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {0} has zero variance and cannot be standardized")]
    ConstantRow(usize),

    #[error("factor count must be at least 2, got {0}")]
    InvalidFactorCount(usize),

    #[error("conflicting model fields `{first}` and `{second}`: {detail}")]
    SpecConflict {
        first: &'static str,
        second: &'static str,
        detail: String,
    },

    #[error("cholesky factorization failed even with jitter {jitter:e}")]
    CholeskyFailure { jitter: f64 },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("fraction must lie in [0, 1), got {0}")]
    InvalidFraction(f64),

    #[error("every gene was removed from seed group {0}")]
    AllRemoved(String),

    #[error("need at least {needed} retained states, found {found}")]
    InsufficientDraws { needed: usize, found: usize },

    #[error("draws file format version {found} is not supported (expected {expected})")]
    FormatVersionMismatch { found: u32, expected: u32 },

    #[error("corrupt draws file: {0}")]
    CorruptFile(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable code, used by the CLI error line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::ConstantRow(_) => "CONSTANT_ROW",
            Error::InvalidFactorCount(_) => "INVALID_FACTOR_COUNT",
            Error::SpecConflict { .. } => "SPEC_CONFLICT",
            Error::CholeskyFailure { .. } => "CHOLESKY_FAILURE",
            Error::ShapeMismatch { .. } => "SHAPE_MISMATCH",
            Error::InvalidFraction(_) => "INVALID_FRACTION",
            Error::AllRemoved(_) => "ALL_REMOVED",
            Error::InsufficientDraws { .. } => "INSUFFICIENT_DRAWS",
            Error::FormatVersionMismatch { .. } => "FORMAT_VERSION_MISMATCH",
            Error::CorruptFile(_) => "CORRUPT_FILE",
            Error::InvalidInput(_) => "INVALID_INPUT",
            Error::Config(_) => "CONFIG",
            Error::Io(_) => "IO",
            Error::Csv(_) => "CSV",
        }
    }
}

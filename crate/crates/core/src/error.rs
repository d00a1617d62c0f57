use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("group `{group}` has {size} curve(s); at least 2 are required")]
    InsufficientSample { group: String, size: usize },

    /// `n − k` too small for the bias-reduced denominators.
    #[error("degenerate degrees of freedom: n - k = {dof}, need at least {required}")]
    DegenerateDof { dof: i64, required: i64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for the numeric degeneracies (zero-variance data, too few degrees
    /// of freedom), as opposed to malformed input.
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::DegenerateData(_) | Error::DegenerateDof { .. })
    }
}

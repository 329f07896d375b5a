use std::path::PathBuf;

use thiserror::Error;

use crate::opinf::LambdaRow;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{}:{line}: {message}", path.display())]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("missing data: {0}")]
    MissingData(&'static str),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("singular operator: {0}")]
    SingularOperator(String),

    #[error("operators not separable: stiffness spectrum {spectrum:?}")]
    NotSeparable { spectrum: Vec<(f64, f64)> },

    #[error("ill-conditioned eigenmodes (condition {condition:.3e})")]
    IllConditionedModes { condition: f64 },

    #[error("no viable regularization weight among {} candidates", table.len())]
    NoViableLambda { table: Vec<LambdaRow> },

    #[error("invalid comparison: {0}")]
    InvalidComparison(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit status used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::InvalidParameter(_)
            | Error::InvalidInput(_)
            | Error::Format { .. }
            | Error::MissingData(_)
            | Error::InsufficientData(_)
            | Error::InvalidComparison(_)
            | Error::Io { .. } => 2,
            Error::DegenerateInput(_)
            | Error::SingularOperator(_)
            | Error::NotSeparable { .. }
            | Error::IllConditionedModes { .. }
            | Error::NoViableLambda { .. }
            | Error::Numerical(_) => 3,
        }
    }
}

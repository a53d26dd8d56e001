use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum SsnError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported input at line {line}: {msg}")]
    Unsupported { line: usize, msg: String },

    #[error("inner solver did not converge after {iterations} iterations (residual {residual:.3e}, target {target:.3e})")]
    InnerSolve {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SsnError>;

impl SsnError {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        SsnError::Dimension(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        SsnError::Parse {
            line,
            msg: msg.into(),
        }
    }
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WvfError {
    #[error("unknown state {0}")]
    UnknownState(usize),
    #[error("unknown action {0}")]
    UnknownAction(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("goal buffer is empty")]
    EmptyGoalBuffer,
    #[error("value iteration did not converge after {iterations} iterations (residual {residual})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("layout error: {0}")]
    Layout(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = WvfError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> WvfError {
    WvfError::InvalidArgument(msg.into())
}

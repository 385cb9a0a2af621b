use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("calibration did not converge after {iterations} iterations (best residual {residual:.3e})")]
    Calibration { iterations: usize, residual: f64 },

    #[error("replication error: {0}")]
    Replication(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("degenerate regressor: {0}")]
    DegenerateRegressor(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

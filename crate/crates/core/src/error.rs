use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("ensemble is not complete: smallest covariance eigenvalue {lambda_min:e} is below {threshold:e}")]
    NotComplete { lambda_min: f64, threshold: f64 },

    #[error("sparse eigenvalue enumeration needs {supports} supports but the budget is {budget}")]
    BudgetExceeded { supports: u128, budget: u64 },

    #[error("invalid ensemble: {0}")]
    InvalidSpec(String),

    #[error("invalid arguments: {0}")]
    InvalidArgs(String),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("right-hand side is outside the range of the matrix (residual {residual:e})")]
    Infeasible { residual: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input documents or arguments rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidSpec(_)
                | Error::InvalidArgs(_)
                | Error::OutOfRange(_)
                | Error::Config(_)
                | Error::Json(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

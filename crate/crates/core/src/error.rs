use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate draw: {0}")]
    Degenerate(String),
    #[error("model selection failed: {0}")]
    Selection(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

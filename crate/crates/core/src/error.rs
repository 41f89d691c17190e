use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("component {component} has a zero column in mode {mode}")]
    DegenerateComponent { component: usize, mode: usize },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("closed form undefined: {0}")]
    ClosedFormUndefined(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

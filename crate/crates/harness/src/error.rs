use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error in {field}: {msg}")]
    Config { field: String, msg: String },

    #[error(transparent)]
    Core(#[from] spider_em::Error),

    #[error("{0}")]
    Input(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn config_error(field: impl Into<String>, msg: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.into(),
        msg: msg.into(),
    }
}

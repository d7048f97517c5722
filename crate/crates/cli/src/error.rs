use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerics error in {context}: {source}")]
    Numerics {
        context: String,
        #[source]
        source: rwpmlab_core::Error,
    },
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn config<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

/// Attach a context label to core errors.
pub(crate) trait Context<T> {
    fn ctx(self, context: &str) -> CliResult<T>;
}

impl<T> Context<T> for rwpmlab_core::Result<T> {
    fn ctx(self, context: &str) -> CliResult<T> {
        self.map_err(|source| CliError::Numerics { context: context.to_string(), source })
    }
}

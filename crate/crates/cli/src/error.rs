use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Solver(#[from] pasolve_core::Error),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Reports a parameter violation under its key in config section `section`.
    pub fn prefixed(section: &str, e: pasolve_core::Error) -> Self {
        match e {
            pasolve_core::Error::InvalidParameter { name, constraint } => {
                CliError::Config(format!("invalid `{section}.{name}`: {constraint}"))
            }
            other => CliError::Solver(other),
        }
    }

    /// Reports a parameter violation whose name is already a config key.
    pub fn from_core_named(e: pasolve_core::Error) -> Self {
        match e {
            pasolve_core::Error::InvalidParameter { name, constraint } => CliError::Config(format!("invalid `{name}`: {constraint}")),
            other => CliError::Solver(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

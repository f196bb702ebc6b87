use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot parse run spec: {0}")]
    Parse(#[source] serde_json::Error),

    #[error("invalid run spec field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error(transparent)]
    Core(#[from] ccr_core::Error),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write report: {0}")]
    Write(String),
}

impl CliError {
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        CliError::Invalid {
            field,
            reason: reason.into(),
        }
    }

    /// 2 for anything wrong with the run spec, 1 for failures while running.
    pub fn exit_code(&self) -> u8 {
        use ccr_core::Error as E;
        match self {
            CliError::Parse(_) | CliError::Invalid { .. } => 2,
            CliError::Core(E::Domain { .. } | E::NonPsdCorrelation { .. } | E::Grid(_)) => 2,
            _ => 1,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Write(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Write(e.to_string())
    }
}

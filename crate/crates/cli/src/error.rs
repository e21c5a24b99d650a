use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] segcert::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<CliError>,
    },
}

impl CliError {
    pub fn context(self, context: impl Into<String>) -> Self {
        CliError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// 2 configuration, 3 input/output, 4 numeric or domain.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Context { source, .. } => source.exit_code(),
            CliError::Core(e) => match e {
                segcert::Error::Config(_) => 2,
                segcert::Error::Io { .. } | segcert::Error::Parse { .. } => 3,
                _ => 4,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

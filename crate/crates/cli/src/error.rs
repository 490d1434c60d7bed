use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical tolerance failure: {0}")]
    Numerical(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
            Self::Io { .. } => 1,
        }
    }
}

/// Wraps an engine error. Parameter errors are config errors; everything
/// else is a numerical failure.
pub fn engine(context: impl std::fmt::Display) -> impl Fn(qwork::Error) -> CliError {
    move |e| match e {
        qwork::Error::InvalidParameter { .. } => CliError::Config(format!("{context}: {e}")),
        _ => CliError::Numerical(format!("{context}: {e}")),
    }
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Unreadable, malformed or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] lampdet_core::Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            _ => 3,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        PipelineError::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

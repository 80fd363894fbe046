use thiserror::Error;

/// Validation problems (bad config, missing keys or inputs) exit with 2,
/// failures while processing with 1.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Processing(#[from] carvepaint::Error),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

impl PipelineError {
    pub fn config(msg: impl Into<String>) -> Self {
        PipelineError::Config(msg.into())
    }

    pub fn missing(key: &str, why: &str) -> Self {
        PipelineError::Config(format!("missing key {key} ({why})"))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Processing(_) => 1,
        }
    }
}

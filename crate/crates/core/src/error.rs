use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("linear program solver failure: {0}")]
    Solver(String),

    #[error("invalid system specification: {0}")]
    InvalidSpec(String),

    #[error("preview exceeds delay: unsupported (preview {preview} > delay {tau})")]
    PreviewExceedsDelay { preview: usize, tau: usize },

    #[error("supervisor failure: {0}")]
    Supervisor(String),

    #[error("Riccati recursion failed: {0}")]
    Riccati(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    /// True for errors caused by bad user input rather than numerical trouble.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_)
                | Error::InvalidSpec(_)
                | Error::PreviewExceedsDelay { .. }
                | Error::Json(_)
                | Error::Io(_)
        )
    }
}

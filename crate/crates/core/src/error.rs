use thiserror::Error;

/// Errors produced by the model, samplers and I/O layers.
#[derive(Debug, Error)]
pub enum PscError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure in {context}: {detail}")]
    Numerical { context: String, detail: String },

    #[error("stratum is empty in every retained draw")]
    EmptyStratum,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("draw log format: {0}")]
    Format(String),

    #[error("chain aborted at iteration {iteration}: {source}")]
    ChainAborted {
        iteration: usize,
        #[source]
        source: Box<PscError>,
        partial: Box<crate::engine::PosteriorDraws>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl PscError {
    pub(crate) fn numerical(context: impl Into<String>, detail: impl Into<String>) -> Self {
        PscError::Numerical {
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        PscError::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, PscError>;

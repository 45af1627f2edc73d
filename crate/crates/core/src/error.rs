use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error{}: {message}", mode.map(|j| format!(" (mode {j})")).unwrap_or_default())]
    Numeric { mode: Option<usize>, message: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("stationary law undefined at mode {mode}: reversion rate {rate:e} is not positive")]
    StationaryUndefined { mode: usize, rate: f64 },

    #[error("diagnostic error: {0}")]
    Diagnostic(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numeric(mode: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Numeric {
            mode,
            message: msg.into(),
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Attaches a mode index to a numeric error that does not carry one yet.
    pub fn at_mode(self, j: usize) -> Self {
        match self {
            Error::Numeric { mode: None, message } => Error::Numeric {
                mode: Some(j),
                message,
            },
            other => other,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

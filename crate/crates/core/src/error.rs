use thiserror::Error;

/// Errors produced anywhere in the observation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad shapes, ranges or configuration values.
    #[error("validation error: {0}")]
    Validation(String),

    /// A linear system could not be solved to the required accuracy.
    #[error("singular or ill-conditioned matrix (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    /// Iterative algorithm failed to converge or produced non-finite values.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Data carries no usable variation (constant features, collapsed regressors).
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// The ODE integrator gave up.
    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    /// Malformed input file.
    #[error("{path}: {location}: {message}")]
    Parse {
        path: String,
        location: String,
        message: String,
    },

    /// A pipeline stage failed; wraps the underlying error.
    #[error("stage `{stage}` failed: {error}")]
    Stage { stage: &'static str, error: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn parse(
        path: impl Into<String>,
        location: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            path: path.into(),
            location: location.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 2 validation, 3 numerical, 4 IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Parse { .. } => 2,
            Error::Singular { .. }
            | Error::Numerical(_)
            | Error::Degenerate(_)
            | Error::Integration { .. } => 3,
            Error::Io(_) | Error::Json(_) => 4,
            Error::Stage { error, .. } => error.exit_code(),
        }
    }

    /// Tag an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                error: Box::new(e),
            },
        }
    }
}

use thiserror::Error;

use crate::dsl::ParseError;
use crate::state::EpidemicState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Inconsistent dimensions or invalid parameter values.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("expression error: {0}")]
    Parse(#[from] ParseError),

    /// The interaction matrix misbehaved on a feasible state: a negative entry or an
    /// evaluation failure such as a division by zero.
    #[error("model validity error: {message}")]
    ModelValidity {
        message: String,
        entry: Option<(usize, usize)>,
        witness: Option<EpidemicState>,
    },

    /// An operation was called on inputs outside its contract.
    #[error("usage error: {0}")]
    Usage(String),

    /// A required model property does not hold (e.g. unimodality hypotheses).
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("numerical error: {message} (best estimate {best_estimate})")]
    Numerical { message: String, best_estimate: f64 },

    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64, state: EpidemicState },

    #[error("integration failure at t = {t}: {reason}")]
    IntegrationFailure {
        t: f64,
        reason: String,
        state: EpidemicState,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn model(message: impl Into<String>) -> Self {
        Error::ModelValidity {
            message: message.into(),
            entry: None,
            witness: None,
        }
    }

    /// Short machine-readable tag used in JSON diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Parse(_) => "parse",
            Error::ModelValidity { .. } => "model_validity",
            Error::Usage(_) => "usage",
            Error::Precondition(_) => "precondition",
            Error::Numerical { .. } => "numerical",
            Error::StepSizeUnderflow { .. } => "step_size_underflow",
            Error::IntegrationFailure { .. } => "integration_failure",
            Error::Io(_) => "io",
        }
    }

    /// Process exit status: 1 for failures attributable to the model, 2 for usage and
    /// configuration problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ModelValidity { .. }
            | Error::Precondition(_)
            | Error::Numerical { .. }
            | Error::StepSizeUnderflow { .. }
            | Error::IntegrationFailure { .. } => 1,
            Error::Config(_) | Error::Parse(_) | Error::Usage(_) | Error::Io(_) => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

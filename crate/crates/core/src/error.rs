use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inputs whose shape or degrees do not fit together.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("degenerate denominator: leading coefficient is zero")]
    DegenerateDenominator,

    #[error("root finding did not converge (reconstruction residual {residual:e})")]
    RootFinding { residual: f64 },

    #[error("graph contains a cycle through node '{0}'")]
    Cycle(String),

    #[error("node '{0}' is not on any source-to-sink path")]
    Unreachable(String),

    #[error("edge ({0}, {1}) is not scheduled")]
    Unscheduled(String, String),

    /// A path-prefix weight sum vanished, so the data never reaches that element.
    #[error("degenerate routing: alpha of '{0}' is zero")]
    DegenerateRouting(String),

    #[error("weight assignment is singular at node '{0}'")]
    Singular(String),

    #[error("weight construction failed: {0}")]
    Construction(String),

    #[error("infeasible ({stage}): {detail}")]
    Infeasible { stage: String, detail: String },

    #[error("problem is unbounded: {0}")]
    Unbounded(String),

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error("candidate budget of {budget} exceeded; reduce the maximum period")]
    BudgetExceeded { budget: usize },

    #[error("{pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub fn infeasible(stage: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Infeasible {
            stage: stage.into(),
            detail: detail.into(),
        }
    }

    pub fn config(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible { .. } | Error::Unbounded(_) => 2,
            Error::BudgetExceeded { .. } => 3,
            Error::Config { .. } => 4,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("tableau structure: {0}")]
    Structure(String),

    #[error("non-finite right-hand side at t = {t:e}, y = {y:?}")]
    Evaluation { t: f64, y: Vec<f64> },

    #[error("invalid controller parameters: {0}")]
    InvalidParams(String),

    #[error("step budget of {0} trial steps exceeded")]
    StepBudget(usize),

    #[error("step size underflow at t = {t:e} (h = {h:e}); tolerance unattainable")]
    StepUnderflow { t: f64, h: f64 },

    #[error("solution diverged at t = {t:e}")]
    Divergence { t: f64 },

    #[error("unknown problem id {id:?}; valid ids: {valid}")]
    UnknownProblem { id: String, valid: String },

    #[error("unsupported problem {id}: {reason}")]
    Unsupported { id: String, reason: String },

    #[error("work-precision curve for {0} has no successful runs")]
    EmptyCurve(String),

    #[error("target global error {target:e} is not bracketed by the curve")]
    Unbracketed { target: f64 },

    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    #[error("data: {0}")]
    Data(String),

    #[error("parse: {0}")]
    Parse(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Strips `Context` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }
}

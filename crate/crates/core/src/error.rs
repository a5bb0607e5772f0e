use thiserror::Error;

/// Errors raised by the model, the solvers and the calibration pipeline.
///
/// Variant names are stable: the CLI prints them verbatim on stderr.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("InvalidParams: {0}")]
    InvalidParams(String),

    #[error("InvalidInput: {0}")]
    InvalidInput(String),

    #[error("ConstraintViolation: {0}")]
    ConstraintViolation(String),

    #[error("NonCritical: no real critical volatility ({0})")]
    NonCritical(String),

    #[error("CriticalDivergence: |h^2 - h_c^2| = {gap:e} is below {threshold:e}")]
    CriticalDivergence { gap: f64, threshold: f64 },

    #[error("OrderedPhase: h = {h} is not above h_c = {h_c}")]
    OrderedPhase { h: f64, h_c: f64 },

    #[error("InsufficientBranch: {found} valid points, need at least {needed}")]
    InsufficientBranch { found: usize, needed: usize },

    #[error("NearSingular: 1 - <A> = {margin:e}")]
    NearSingular { margin: f64 },

    #[error("NonConvergence: {what} after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },

    #[error("UnstableStep: |y| = {value} exceeded bound {bound} at step {step}")]
    UnstableStep { step: usize, value: f64, bound: f64 },

    #[error("CFLViolation: dt * rate = {courant} exceeds 1")]
    CflViolation { courant: f64 },

    #[error("InsufficientQuotes: {found} quotes, need at least {needed}")]
    InsufficientQuotes { found: usize, needed: usize },

    #[error("OptimizerFailure: best loss {best_loss} ({detail})")]
    OptimizerFailure { best_loss: f64, detail: String },
}

impl Error {
    /// Short variant name, used for structured diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "InvalidParams",
            Error::InvalidInput(_) => "InvalidInput",
            Error::ConstraintViolation(_) => "ConstraintViolation",
            Error::NonCritical(_) => "NonCritical",
            Error::CriticalDivergence { .. } => "CriticalDivergence",
            Error::OrderedPhase { .. } => "OrderedPhase",
            Error::InsufficientBranch { .. } => "InsufficientBranch",
            Error::NearSingular { .. } => "NearSingular",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::UnstableStep { .. } => "UnstableStep",
            Error::CflViolation { .. } => "CFLViolation",
            Error::InsufficientQuotes { .. } => "InsufficientQuotes",
            Error::OptimizerFailure { .. } => "OptimizerFailure",
        }
    }

    /// True for errors caused by bad user input rather than numerical trouble.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParams(_)
                | Error::InvalidInput(_)
                | Error::InsufficientQuotes { .. }
                | Error::ConstraintViolation(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

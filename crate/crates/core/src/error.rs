use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Argument outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration (grid, bounds, budgets, ...).
    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    /// Non-finite or malformed input data.
    #[error("input error: {0}")]
    Input(String),

    /// API misuse, e.g. mismatched grids or a missing control.
    #[error("usage error: {0}")]
    Usage(String),

    /// Implicit neutral step did not converge.
    #[error("neutral solve did not converge at step {step} after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    /// State left the configured clamp.
    #[error("divergence at step {step}: |x| = {value:e} exceeds clamp")]
    Divergence { step: usize, value: f64 },

    /// Monte Carlo estimate could not be formed.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// Failure inside one Monte Carlo sample.
    #[error("sample {index}: {source}")]
    Sample { index: usize, source: Box<Error> },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Innermost error, unwrapping sample context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Sample { source, .. } => source.root(),
            e => e,
        }
    }
}

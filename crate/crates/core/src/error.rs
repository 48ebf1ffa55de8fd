use thiserror::Error;

/// Errors raised anywhere in the simulation and filtering pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A scenario or model parameter is inconsistent. `field` is a dotted path.
    #[error("configuration error at `{field}`: {message}")]
    Config { field: String, message: String },

    /// An input value could not be processed (non-finite measurement, bad codeword).
    #[error("input error: {0}")]
    Input(String),

    /// Required data was missing or out of the grid.
    #[error("data error: {0}")]
    Data(String),

    /// A numerical invariant (PSD, non-negativity) failed at run time.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// A matrix that must be positive definite could not be factorized.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// Requested region lies outside the analyzed case `i >= delay_N.0`, `j >= delay_N.1`.
    #[error("out of scope: {0}")]
    OutOfScope(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("scenario parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical divergence at step {step}: non-finite state component")]
    Divergence { step: usize },

    #[error("group generation exceeded max order {max_order}; generators do not close to a finite group")]
    NonFiniteGroup { max_order: usize },

    #[error(
        "dictionary not closed under element '{label}': defect {residual:e} exceeds tolerance {tol:e} \
         (hint: use a graded monomial dictionary that contains every monomial of each degree, or raise max_degree)"
    )]
    DictionaryNotClosed { label: String, residual: f64, tol: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("commutation check requires an element of the fitted set's stabilizer; '{label}' is not one")]
    IsotropyRequired { label: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

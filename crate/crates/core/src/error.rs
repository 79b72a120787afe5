use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Parameters outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "series did not reach tolerance {tol:e} within {budget} terms at x = {x} \
         (last tail bound {tail_bound:e})"
    )]
    BudgetExceeded {
        budget: usize,
        x: f64,
        tail_bound: f64,
        tol: f64,
    },

    #[error("coefficient sequence has no value for index {index} (prefix length {len}, no rule)")]
    SequenceExhausted { index: usize, len: usize },

    #[error("normalization factor {value:e} is not above the positivity floor {floor:e}")]
    NormalizationDegenerate { value: f64, floor: f64 },

    #[error("quadrature did not converge: estimate {estimate}, error estimate {error:e} > {tol:e}")]
    QuadratureNonConvergence { estimate: f64, error: f64, tol: f64 },

    #[error("unsupported family: {0}")]
    UnsupportedFamily(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

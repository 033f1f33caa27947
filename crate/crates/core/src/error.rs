use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument outside the domain of the operation (negative frequency,
    /// non-positive temperature, `|z| > 1`, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid spectral model: {0}")]
    InvalidModel(String),

    /// Quadrature did not reach the requested accuracy within its budget.
    #[error("quadrature did not converge: {message} (partial value {partial}, error estimate {error_estimate:e})")]
    Quadrature {
        message: String,
        partial: f64,
        error_estimate: f64,
    },

    /// The long-time expansion cannot be built because no admissible index exists.
    #[error("asymptotic expansion refused: {0}")]
    Refused(String),

    /// `s` sits on a pole of the Mellin transform.
    #[error("Mellin transform has a pole of order {order} at s = {at}")]
    Pole { at: String, order: u32 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

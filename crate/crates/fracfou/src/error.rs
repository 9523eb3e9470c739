use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("Hurst parameter {0} is outside (0, 1)")]
    InvalidHurst(f64),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("scale separation {0} must be finite and positive")]
    InvalidScale(f64),
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("{0} is not a centred L2 function with positive Hermite rank")]
    InvalidChaos(String),
    #[error("chaos order {0} is not supported (orders 1 to 3 only)")]
    OrderNotSupported(usize),
    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),
    #[error("degenerate limit constant: {0}")]
    Degenerate(String),
    #[error("solution left the bounded region: |x| = {value:e} at t = {time}")]
    BlowUp { time: f64, value: f64 },
    #[error("sampler infeasible for n = {n}: smallest eigenvalue {min_eigenvalue:e}")]
    SamplerInfeasible { n: usize, min_eigenvalue: f64 },
    #[error("quadrature did not converge for {what}: error estimate {estimate:e}")]
    Quadrature { what: &'static str, estimate: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Whether the error comes from invalid input rather than from a numerical failure.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::Degenerate(_) | Error::BlowUp { .. } | Error::SamplerInfeasible { .. } | Error::Quadrature { .. }
        )
    }
}

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge: estimate {estimate:e}, error {error:e} above tolerance {tolerance:e}")]
    Quadrature {
        estimate: f64,
        error: f64,
        tolerance: f64,
    },

    #[error("invalid experiment: {0}")]
    Invalid(String),

    #[error("degenerate reduction event: no bundle can fluctuate")]
    DegenerateEvent,

    #[error("reconfiguration solution space of dimension {0} outside the two-bundle-per-area pattern")]
    UnsupportedSolutionSpace(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// True for errors that stem from user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Invalid(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("sketch width must be positive")]
    InvalidWidth,
    #[error("keys must be non-empty")]
    InvalidKey,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("pole at {0}")]
    Pole(f64),
    #[error("divergent integral: {0}")]
    Divergence(String),
    #[error("problem too large for exact evaluation: {0}")]
    TooLarge(String),
    #[error("quadrature did not reach tolerance (estimated error {achieved:.3e}, requested {requested:.3e})")]
    Accuracy { achieved: f64, requested: f64 },
    #[error("Monte Carlo estimate degenerate: {0}")]
    DegenerateMc(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("sketch mismatch: {0}")]
    Mismatch(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for errors raised by explicit tractability/numerical gates.
    pub fn is_numeric_gate(&self) -> bool {
        matches!(
            self,
            Error::TooLarge(_)
                | Error::Accuracy { .. }
                | Error::DegenerateMc(_)
                | Error::Divergence(_)
                | Error::Pole(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// `|E[nu^r]|` is too small to invert.
    #[error("residual moment of order {order} is numerically zero ({value:e}, threshold {threshold:e})")]
    DegenerateMoment { order: usize, value: f64, threshold: f64 },
    #[error("invalid order: {0}")]
    InvalidOrder(String),
    #[error("coefficient system is singular")]
    SingularSystem,
    #[error("invalid moments: {0}")]
    InvalidMoments(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("treatment {0} has no observations")]
    MissingClass(usize),
    #[error("shape mismatch: expected {expected} columns, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("split would leave the {0} fold empty")]
    EmptyFold(&'static str),
    #[error("no estimation-fold unit received treatment {treatment}")]
    EmptyResidualSet { treatment: usize },
    #[error("true pairwise effects of dataset {index} sum to zero in absolute value")]
    ZeroDenominator { index: usize },
}

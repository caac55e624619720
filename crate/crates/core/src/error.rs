use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failures raised by the library.
///
/// Variants split into two families: input validation (bad parameters,
/// shapes, domains) and numerical failure (blow-ups, barrier violations).
/// [`Error::is_validation`] tells them apart for callers that map errors
/// onto exit codes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("correlation matrix is not symmetric (max |R - R^T| = {0:e})")]
    AsymmetricInput(f64),

    #[error("correlation matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("risk aversion {0} is not in the admissible set (discriminant <= 0 or delta = 1)")]
    InadmissibleDelta(f64),

    #[error("Riccati solution blew up at t = {t}: |f| = {value:e}")]
    RiccatiBlowUp { t: f64, value: f64 },

    #[error("filter variance went negative at t = {t}: P = {value:e}")]
    NegativeVariance { t: f64, value: f64 },

    #[error("1 - P(t) f(t) = {value:e} is not positive at t = {t}")]
    SingularTransform { t: f64, value: f64 },

    #[error("closed forms require a non-zero mean-reversion rate")]
    LambdaZero,

    #[error("degenerate case: {0}")]
    DegenerateCase(String),

    #[error("time {t} lies outside the solved horizon [0, {horizon}]")]
    OutOfGrid { t: f64, horizon: f64 },

    #[error("multiplier theta^T 1 = {0:e} is too close to zero to define weights")]
    DegenerateMultiplier(f64),

    #[error("wrong shape: {0}")]
    WrongShape(String),

    #[error("non-finite observation at step {0}")]
    NonFiniteObservation(usize),

    #[error("cushion must be positive, got {0}")]
    NonPositiveCushion(f64),

    #[error("sample is empty")]
    EmptySample,

    #[error("grids are incompatible: {0}")]
    GridMismatch(String),
}

impl Error {
    /// True for errors caused by invalid inputs rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::AsymmetricInput(_)
                | Error::NotPositiveDefinite { .. }
                | Error::InvalidParameter(_)
                | Error::InadmissibleDelta(_)
                | Error::LambdaZero
                | Error::DegenerateCase(_)
                | Error::OutOfGrid { .. }
                | Error::WrongShape(_)
                | Error::NonPositiveCushion(_)
                | Error::EmptySample
                | Error::GridMismatch(_)
        )
    }
}

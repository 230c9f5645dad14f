use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("symmetric eigen-solver did not converge at k = {k}")]
    EigenSolver { k: f64 },

    #[error("norm drift {drift:.3e} in Bloch period {period} persists after {halvings} step halvings")]
    StepSize { period: usize, drift: f64, halvings: u32 },

    #[error("gauge fixing failed at t = {t}: successive eigenvector overlap {overlap:.3e}")]
    Gauge { t: f64, overlap: f64 },

    #[error("protocol action requested at t = {time}, which is not an integer multiple of the Bloch period")]
    ProtocolTiming { time: f64 },

    #[error("cascade operator has no dominant eigenvalue (|e2|/|e1| = {ratio})")]
    Degenerate { ratio: f64 },

    #[error("closed-form Z = {closed} disagrees with eigen-projection Z = {projection}")]
    ClosedFormMismatch { closed: f64, projection: f64 },

    #[error("non-positive probability {value} at index {index}")]
    NonPositiveProbability { index: usize, value: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Parameter and input-shape errors, as opposed to numerical failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::ProtocolTiming { .. }
                | Error::InsufficientData(_)
                | Error::NonPositiveProbability { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

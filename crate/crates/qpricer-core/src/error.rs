//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

/// Errors surfaced by the numerical kernels.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Input outside the domain of a deformed-exponential style function.
    /// `bound` is the domain endpoint that was violated.
    Domain {
        what: &'static str,
        value: f64,
        bound: f64,
        q: f64,
    },
    /// Invalid parameter or configuration.
    Invalid { what: String },
    /// A loading or payoff evaluated to a non-finite value.
    NonFinite {
        what: &'static str,
        path: usize,
        step: usize,
    },
    /// Mismatched sample lengths.
    Mismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    /// Regression normal equations were not positive definite at a step.
    RankDeficient { step: usize },
    /// Picard iteration did not reach tolerance.
    PicardDiverged { step: usize, residual: f64 },
    /// Pathwise fixed point did not converge.
    FixedPointDiverged { step: usize },
    /// `mu(y)` fell below its positivity floor somewhere on a solution.
    MuFloor { value: f64, floor: f64 },
    /// Claim not admissible for the requested `(q, gamma)`.
    Inadmissible { reason: String },
    /// Nested estimators need at least two inner paths.
    TooFewInnerPaths { m: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain {
                what,
                value,
                bound,
                q,
            } => write!(
                f,
                "{what}: argument {value} outside domain (bound {bound}, q = {q})"
            ),
            Error::Invalid { what } => write!(f, "invalid input: {what}"),
            Error::NonFinite { what, path, step } => {
                write!(f, "{what} non-finite at path {path}, step {step}")
            }
            Error::Mismatch { what, left, right } => {
                write!(f, "{what}: length mismatch ({left} vs {right})")
            }
            Error::RankDeficient { step } => {
                write!(f, "regression rank-deficient at time step {step}")
            }
            Error::PicardDiverged { step, residual } => write!(
                f,
                "Picard iteration stalled at step {step} (residual {residual:e})"
            ),
            Error::FixedPointDiverged { step } => {
                write!(f, "pathwise fixed point diverged at step {step}")
            }
            Error::MuFloor { value, floor } => {
                write!(f, "mu(y) = {value:e} fell below floor {floor:e}")
            }
            Error::Inadmissible { reason } => write!(f, "claim inadmissible: {reason}"),
            Error::TooFewInnerPaths { m } => {
                write!(f, "nested estimate needs m >= 2 inner paths, got {m}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

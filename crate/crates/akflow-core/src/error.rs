//! Error type shared across the crate.

use alloc::string::String;
use core::fmt;

/// Errors raised by grid construction, tensor algebra and the flow driver.
#[derive(Debug, Clone, PartialEq)]
pub enum AkError {
    /// Grid or run configuration is inconsistent (odd dimension, stencil
    /// wider than an axis, bad amplitude, ...).
    Config(String),
    /// Tensor operands disagree on rank, variance or grid.
    Type(String),
    /// A generator matrix failed the symplectic Lie-algebra test.
    NotSymplectic { residual: f64 },
    /// The candidate metric lost positivity somewhere on the grid.
    NotPositiveDefinite { point: usize, min_eig: f64 },
    /// A flow step produced structure drift beyond the configured tolerance.
    DriftExceeded {
        step: usize,
        what: &'static str,
        value: f64,
        point: usize,
    },
    /// An evolution check needs at least three saved states.
    InsufficientStates { have: usize },
}

impl fmt::Display for AkError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AkError::Config(m) => write!(f, "configuration error: {m}"),
            AkError::Type(m) => write!(f, "type error: {m}"),
            AkError::NotSymplectic { residual } => write!(
                f,
                "generator is not in sp(2n, R): |A^T w + w A| = {residual:.3e}"
            ),
            AkError::NotPositiveDefinite { point, min_eig } => write!(
                f,
                "metric not positive definite at grid point {point}: min eigenvalue {min_eig:.3e}"
            ),
            AkError::DriftExceeded {
                step,
                what,
                value,
                point,
            } => write!(
                f,
                "flow step {step} rejected: {what} drift {value:.3e} at grid point {point}"
            ),
            AkError::InsufficientStates { have } => {
                write!(f, "evolution check needs >= 3 saved states, have {have}")
            }
        }
    }
}

impl core::error::Error for AkError {}

pub type Result<T> = core::result::Result<T, AkError>;

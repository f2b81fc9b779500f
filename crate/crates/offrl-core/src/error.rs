//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

/// Errors surfaced by core operations.
///
/// Variants carry enough context to be actionable without a backtrace; the
/// companion crate maps them onto process exit codes.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// A domain type violated one of its invariants at construction.
    InvalidSpec(String),
    /// An operation was called with arguments outside its precondition.
    InvalidArgument(String),
    /// `step` was called on an environment that was never reset.
    EnvNotReset,
    /// Iterative solver failed to converge; carries the last residual.
    NoConvergence { iterations: usize, residual: f64 },
    /// Input/output dimensions do not match the expected shape.
    DimMismatch { expected: usize, got: usize, what: &'static str },
    /// A numeric input or result was NaN or infinite.
    NonFinite(&'static str),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::InvalidSpec(msg) => write!(f, "invalid spec: {msg}"),
            CoreError::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            CoreError::EnvNotReset => write!(f, "environment stepped before reset"),
            CoreError::NoConvergence { iterations, residual } => {
                write!(f, "no convergence after {iterations} iterations (residual {residual:e})")
            }
            CoreError::DimMismatch { expected, got, what } => {
                write!(f, "dimension mismatch for {what}: expected {expected}, got {got}")
            }
            CoreError::NonFinite(what) => write!(f, "non-finite value in {what}"),
        }
    }
}

impl core::error::Error for CoreError {}

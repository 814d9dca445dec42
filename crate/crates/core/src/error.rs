//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by validation, numerical routines, and parsers.
#[derive(Debug, Error)]
pub enum Error {
    /// A domain type rejected its inputs.
    #[error("invalid {field}: {reason}")]
    Invalid {
        /// Field or parameter that failed validation.
        field: &'static str,
        /// Human-readable explanation.
        reason: String,
    },

    /// The log-normal density is undefined for `sigma_x2 = 0`; callers
    /// should take the deterministic fast path instead.
    #[error("degenerate log-normal (sigma_x2 = 0) has no density")]
    DegenerateLognormal,

    /// An operation received an empty collection.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Exhaustive 2^L sequence averaging refused; use the upper bound or
    /// the Monte Carlo oracle instead.
    #[error("channel memory L = {memory} exceeds the exhaustive-averaging cap {cap}; \
             use the upper bound or the bit-level Monte Carlo oracle")]
    MemoryCapExceeded {
        /// Channel memory requested.
        memory: usize,
        /// Configured cap.
        cap: usize,
    },

    /// The tensor-product quadrature path refused; use the Fenton-Wilkinson
    /// path instead.
    #[error("M*N = {dims} exceeds the tensor quadrature cap {cap}; \
             use the Fenton-Wilkinson path")]
    DimensionCapExceeded {
        /// Number of fading dimensions (M*N).
        dims: usize,
        /// Configured cap.
        cap: usize,
    },

    /// Newton iteration for a Hermite polynomial root did not converge.
    #[error("Hermite root {index} of order {order} did not converge after {iterations} iterations")]
    RootNotConverged {
        /// Index of the root (from the largest positive root).
        index: usize,
        /// Quadrature order.
        order: usize,
        /// Iterations attempted.
        iterations: usize,
    },

    /// Text parse failure with a 1-based line number.
    #[error("parse error at line {line}: {message}")]
    Parse {
        /// 1-based line number in the input.
        line: usize,
        /// What went wrong.
        message: String,
    },

    /// Configuration file failed schema or invariant checks.
    #[error("config error: {0}")]
    Config(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

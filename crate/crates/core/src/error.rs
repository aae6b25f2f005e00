//! Error types shared by every module of the crate.

use thiserror::Error;

/// Errors produced by configuration validation, numerical guards, and the
/// simulation drivers.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its documented constraints.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An argument lies outside the supported domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Requested time step exceeds the stability bound of the integrator.
    #[error("step size {dt} exceeds the stability bound {max_dt}")]
    StepSize { dt: f64, max_dt: f64 },

    /// The integrator produced non-finite density values.
    #[error("numerical blow-up at step {step} (t = {time}): non-finite density values")]
    Numerics { step: usize, time: f64 },

    /// The kernel integrates to zero, so rate ratios are undefined.
    #[error("zero kernel: Mellin moments vanish, rate ratios are undefined")]
    ZeroKernel,

    /// An operation that needs a nonempty population was given an empty one.
    #[error("empty population: total fragment count is zero")]
    EmptyPopulation,

    /// A distribution with zero variance cannot be inverted for shape.
    #[error("degenerate distribution: variance is zero")]
    DegenerateDistribution,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand used by validation code.
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A grid spec, training config, or CLI argument failed validation.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// A value vector does not match the grid it claims to sample.
    #[error("misaligned values: expected {expected}, got {got}")]
    Misaligned { expected: usize, got: usize },

    /// A point lies outside the closed space-time box.
    #[error("point outside the domain: x = {x:?}, t = {t}")]
    OutOfDomain { x: Vec<f64>, t: f64 },

    /// A cell with zero side length was requested.
    #[error("degenerate cell: {0}")]
    DegenerateCell(String),

    /// A local Vandermonde system could not be solved.
    #[error("singular interpolation system: {0}")]
    SingularSystem(String),

    /// A smoothness class violates the hypotheses of the requested formula.
    #[error("hypothesis violation: {0}")]
    Hypothesis(String),

    /// A loss, jet, or data value was NaN or infinite.
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    /// Training loss exceeded the divergence threshold.
    #[error("training diverged at iteration {iter}: loss = {loss:e}")]
    Diverged { iter: usize, loss: f64 },

    /// Unknown manufactured problem name.
    #[error("unknown problem: {0}")]
    UnknownProblem(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Malformed checkpoint, config file, or CSV input.
    #[error("parse error: {0}")]
    Parse(String),
}

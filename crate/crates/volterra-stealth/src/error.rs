//! Crate-wide error type.
//!
//! Everything numerical fails loudly: non-finite values are rejected at
//! construction time, near-singular implicit steps abort the Volterra solve,
//! and domain violations (reversed time arguments, out-of-range bounds) are
//! reported with context instead of producing NaN trajectories.

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A grid parameter violates an invariant (non-positive `dt`/`t_end`,
    /// fewer than two nodes, …).
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// Two objects that must share one grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A time or index argument is outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// The implicit diagonal factor of the product-trapezoidal step is too
    /// close to zero to divide by.
    #[error("implicit step singular at t = {t}: |1 - dt/2 * G(t,t)| = {magnitude:.3e} < 1e-12")]
    SingularStep { t: f64, magnitude: f64 },

    /// The horizon is too short for the requested tail diagnostics.
    #[error("insufficient horizon: {0}")]
    InsufficientHorizon(String),

    /// A coefficient expression failed to parse.
    #[error("expression error: {0}")]
    Expr(String),

    /// A system description is structurally invalid (dimension mismatch,
    /// q < 1, …) or failed to deserialize.
    #[error("config error: {0}")]
    Config(String),

    /// A computation was refused because it would exceed a documented
    /// resource guard (e.g. iterated-kernel composition on a huge grid).
    #[error("resource guard: {0}")]
    ResourceGuard(String),
}

impl Error {
    /// True for errors that indicate a numerical failure during a run (as
    /// opposed to bad input). The CLI maps these to a distinct exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::SingularStep { .. } | Error::InsufficientHorizon(_)
        )
    }
}

//! Crate-wide error type.
//!
//! Numerical routines report *why* they gave up (singular determinant at a
//! specific frequency, Riccati residual above tolerance, diverging
//! simulation) so that the experiment harness can log per-trial failures
//! without aborting a whole Monte-Carlo run.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Shape mismatch between operands (matrix products, signal sums, ...).
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    /// A parameter failed validation.
    #[error("invalid parameter `{name}`: {message}")]
    InvalidParam { name: &'static str, message: String },

    /// Determinant numerically indistinguishable from zero somewhere on the
    /// evaluation grid; `omega` is the offending frequency (rad/s).
    #[error("transfer matrix numerically singular at omega = {omega:.6e} rad/s (|det| = {det_mag:.3e}, threshold {threshold:.3e})")]
    Singular {
        omega: f64,
        det_mag: f64,
        threshold: f64,
    },

    /// A frequency-domain filter exceeded the amplification guard.
    #[error("filter amplification {value:.3e} exceeds guard {guard:.3e} at omega = {omega:.6e} rad/s")]
    Conditioning { omega: f64, value: f64, guard: f64 },

    /// Fixed-step integration blew past the overflow guard.
    #[error("simulation diverged at t = {t:.6} s (|state| > {guard:.3e})")]
    Divergence { t: f64, guard: f64 },

    /// Eigenvalue/Schur computation failed to converge or was too
    /// ill-conditioned to trust.
    #[error("eigenproblem failure in {0}")]
    Eigen(&'static str),

    /// PBH stabilizability/detectability test failed.
    #[error("PBH {kind} test failed at eigenvalue {re:.6e}{im:+.6e}i")]
    Pbh { kind: &'static str, re: f64, im: f64 },

    /// Riccati solve did not reach the required residual.
    #[error("Riccati residual {residual:.3e} above tolerance {tolerance:.3e}")]
    Riccati { residual: f64, tolerance: f64 },

    /// Constructed learning filters failed the optimality verification.
    #[error("learning-filter optimality residual {residual:.3e} above tolerance {tolerance:.3e}")]
    FilterResidual { residual: f64, tolerance: f64 },

    /// Lyapunov solve failed (non-Hurwitz coefficient matrix, ...).
    #[error("Lyapunov solve failed: {0}")]
    Lyapunov(&'static str),

    /// State-space realization of a transfer matrix failed.
    #[error("realization failure: {0}")]
    Realization(String),

    /// Rejection sampling gave up.
    #[error("rejection sampling failed after {attempts} attempts in {context}")]
    Rejection {
        context: &'static str,
        attempts: usize,
    },

    /// Balanced truncation preconditions violated.
    #[error("model reduction error: {0}")]
    Reduction(String),

    /// A computed closed loop or generated system failed a stability
    /// requirement.
    #[error("stability check failed: {0}")]
    Unstable(String),

    /// Wire-format (de)serialization failure.
    #[error("schema error: {0}")]
    Schema(String),

    /// A pipeline step failed; wraps the underlying error with the
    /// vehicle-pass step number for diagnosis.
    #[error("vehicle pass step {step} failed: {source}")]
    PipelineStep {
        step: u8,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Tag an error with the vehicle-pass step in which it occurred.
    pub fn at_step(self, step: u8) -> Error {
        Error::PipelineStep {
            step,
            source: Box::new(self),
        }
    }
}

//! Linear time-invariant systems toolbox.
//!
//! Two interchangeable representations with explicit conversions:
//!
//! * [`StateSpace`] — matrices `(A, B, C, D)`, used for time-domain
//!   simulation, Riccati/Lyapunov work, and balanced truncation.
//! * [`TransferMatrix`] — a matrix of zero-pole-gain rational entries,
//!   used for the exact frequency-domain algebra (products, inverses,
//!   learning-filter synthesis) where state-space realizations would
//!   accumulate non-minimal modes.
//!
//! Conversions are [`TransferMatrix::from_state_space`] and [`realize`];
//! both self-check against the source's frequency response and refuse to
//! return a realization that drifts beyond an internal tolerance.
//!
//! Sampled data lives in [`Signal`] (uniform grid, per-channel columns).
//! [`apply_filter`] evaluates a transfer matrix on the DFT grid of a
//! signal's own horizon, which keeps filter composition exact — the
//! property the relay-equivalence tests lean on.

mod filter;
mod freq;
mod rational;
mod realize;
mod reduce;
mod signal;
mod ss;
mod tf;

pub use filter::{apply_filter, AMPLIFICATION_GUARD};
pub use freq::{
    default_grid, log_grid, FrequencyResponse, DEFAULT_GRID_HI, DEFAULT_GRID_LO,
    DEFAULT_GRID_POINTS,
};
pub use rational::{RationalEntry, CANCEL_TOL};
pub use realize::realize;
pub use reduce::{
    balanced_truncation, controllability_gramian, hankel_singular_values, observability_gramian,
    stable_antistable_split,
};
pub use signal::Signal;
pub use ss::{StateSpace, DEFAULT_STABILITY_MARGIN, OVERFLOW_GUARD};
pub use tf::{TransferMatrix, INVERSE_DET_GUARD};

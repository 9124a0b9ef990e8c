//! # roadcast
//!
//! Privacy-preserving collaborative road-profile estimation.
//!
//! A chain of heterogeneous half-car vehicles traverses the same road
//! segment. Each vehicle runs a jump-diffusion-optimal state estimator plus
//! an input observer to form a local estimate of the road input, then
//! relays learning signals to its successor. Relayed dynamics and signals
//! are premultiplied by random stable transfer matrices ("obfuscators") so
//! that an eavesdropper cannot recover the sender's pole/zero structure,
//! while the successor's learning update is provably unaffected.
//!
//! Module map:
//!
//! * [`lti`] — state-space systems, zpk transfer matrices, simulation,
//!   frequency-domain filtering, balanced truncation.
//! * [`vehicle`] — half-car models (true plant + imperfect model).
//! * [`road`] — jump-diffusion road generation.
//! * [`estimator`] — Riccati-optimal state estimator and input observer.
//! * [`collab`] — sensitivity dynamics, learning filters, vehicle passes.
//! * [`privacy`] — obfuscator generation, relay messages, accuracy and
//!   indistinguishability verification.
//! * [`attacker`] — pole inference by model order reduction, and the
//!   matching metric that scores it.
//! * [`synth`] — random test systems shared by property tests and the
//!   indistinguishability checks.

pub mod attacker;
pub mod collab;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod lti;
pub mod privacy;
pub mod road;
pub mod synth;
pub mod vehicle;

pub use error::{Error, Result};

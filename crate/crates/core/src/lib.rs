//! Simulation of polarization-entangled photon pairs through linear optics.
//!
//! The crate models multi-photon polarization states over labeled spatial
//! modes, the optical elements that act on them (wave plates, Brewster
//! windows, compensators, polarizers and the polarizing beam splitter used as
//! a parity filter), and builds on top of them:
//!
//! * entanglement concentration of two identical, partially entangled pairs,
//! * a one-step repeater (concentration and swapping at the same PBS),
//! * local filtering followed by swapping for pairs with known, unequal
//!   coefficients,
//! * a plain Bell-measurement swap for comparison,
//! * CHSH, visibility and fidelity metrics,
//! * an imperfection model with Monte Carlo coincidence counting.
//!
//! Every protocol runs on both a pure-state path and a density-operator path
//! through the [`qstate::Register`] trait.

pub mod cli;
pub mod error;
pub mod metrics;
pub mod optics;
pub mod protocols;
pub mod qstate;
pub mod stochastics;

pub use error::{Error, Result};
pub use num_complex::Complex64;

//! Simulation and analysis of cavity-mediated collective n-body spin
//! interactions.
//!
//! The crate is organized bottom-up:
//!
//! - [`dicke`]: collective spin algebra on the maximal-spin Dicke ladder.
//! - [`params`]: raw cavity/atom constants and the closed-form couplings
//!   derived from them.
//! - [`effective`]: effective Hamiltonians and jump operators obtained by
//!   adiabatically eliminating the cavity fluctuation mode, by two
//!   independent routes.
//! - [`dynamics`]: Lindblad, full atom–cavity and mean-field time evolution.
//! - [`analysis`]: Bloch-sphere flow fields, fixed points and ring
//!   deformations.
//! - [`sequence`]: pulse-sequence protocols, fringe fits and spectra.
//! - [`validation`]: effective model against the full atom-cavity model at
//!   small N.
//!
//! All angular frequencies are in rad/s and all times in seconds unless a
//! name says otherwise.

pub mod analysis;
pub mod dicke;
pub mod dynamics;
pub mod effective;
pub mod error;
pub mod linalg;
pub mod ode;
pub mod params;
pub mod sequence;
pub mod validation;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Version string embedded in exported artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

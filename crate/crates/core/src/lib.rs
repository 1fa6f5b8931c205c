//! Kibble–Zurek ramps toward quantum critical points of open quadratic fermion chains.
//!
//! The crate is layered bottom-up:
//!
//! * [`model`]: BdG chains, dispersion, Bogoliubov angle and their local forms,
//! * [`bath`]: occupation functions and relaxation rates,
//! * [`protocol`]: ramp schedules, classes, predicted exponents, rescaling schemes,
//! * [`dynamics`]: per-mode equations of motion and excitation densities,
//! * [`analysis`]: exponent estimation, power-law fits, data collapse and
//!   identity checks.

pub mod analysis;
pub mod bath;
pub mod dynamics;
mod error;
pub mod model;
pub mod protocol;
pub mod quadrature;

pub use error::{Error, Result};

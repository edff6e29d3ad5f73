//! Pseudo-spectral construction and stability analysis of time-periodic
//! solutions of the damped nonlinear elastic wave system
//!
//! ```text
//!   u_tt - mu Lap u - (lambda + mu) grad div u - nu Lap u_t = F(u) + g(t),
//! ```
//!
//! posed on a periodic box standing in for R^3.

pub mod analysis;
pub mod cauchy;
pub mod config;
pub mod error;
pub mod harness;
pub mod nonlinear;
pub mod periodic;
pub mod spectral;
pub mod symbol;

pub use error::{Error, Result};

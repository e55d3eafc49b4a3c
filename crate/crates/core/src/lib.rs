//! Fourier–Legendre approximation of iterated Itô stochastic integrals.
//!
//! The crate computes exact Legendre coefficients of the simplex kernel,
//! builds the truncated multiple-series approximation for any coincidence
//! pattern of Wiener components, evaluates its mean-square error exactly, and
//! checks it against a coupled Monte Carlo simulation.

pub mod cli;
pub mod coeffs;
pub mod error;
pub mod expansion;
pub mod montecarlo;
pub mod msekit;
pub mod polycore;

pub use error::{Error, Result};

//! Predictor-corrector linear multistep schemes for decoupled
//! forward-backward stochastic differential equations.
//!
//! The crate is organised bottom-up:
//!
//! * [`scheme`] derives and catalogs scheme coefficients in exact arithmetic,
//! * [`stability`] checks the root condition of a corrector,
//! * [`simulation`] draws reproducible Brownian ensembles and Euler paths,
//! * [`regression`] provides least-squares Monte Carlo projections,
//! * [`problems`] defines the problem trait and the two benchmark problems,
//! * [`solver`] runs the backward pass,
//! * [`experiments`] holds the convergence harness and report writers.

pub mod error;
pub mod experiments;
pub mod scheme;
mod linalg;
pub mod problems;
pub mod regression;
pub mod simulation;
pub mod solver;
pub mod stability;

pub use error::{Error, Result};

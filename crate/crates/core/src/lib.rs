//! Explicit fully discrete solver for the stochastic Allen-Cahn equation
//!
//! ```text
//! du = (-A u + F(u)) dt + dW,   u(0) = u0,   on (0, 1) with Dirichlet boundaries,
//! ```
//!
//! with a spectral Galerkin discretisation in space and a tamed accelerated
//! exponential Euler step in time, plus the Monte Carlo machinery to measure
//! weak convergence rates, time-uniform moments and invariant-measure
//! approximation.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod noise;
pub mod operators;
pub mod scheme;
pub mod selftest;
pub mod spectral;

pub use error::{Error, Result};

//! Simulation and verification lab for the stochastic heat equation
//! `du = (Δu + V u) dt + G u dW` with a scalar Wiener process.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod appell;
pub mod coefficients;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod montecarlo;
pub mod solver;
pub mod stats;
pub mod stochastic;
pub mod thresholds;
pub mod weights;

pub use error::{LabError, Result};

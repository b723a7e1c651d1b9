//! Decision-focused learning with regret gradients obtained by projecting
//! the prediction error onto the tangent space of the active constraints.
//!
//! The pipeline is: [`solver::solve`] the forward QP, detect the binding
//! constraints ([`sensitivity::detect_active`]), stack them into the active
//! Jacobian, and recover the gradient from a small Schur-complement system
//! ([`sensitivity::pear_gradient`]). [`train`] wires this into a linear
//! predictor trained with Adam; [`problems`] and [`datagen`] provide the
//! shortest-path, knapsack and mean-variance benchmarks; [`verify`] holds the
//! independent numerical checks.

pub mod datagen;
pub mod error;
pub mod linalg;
pub mod problems;
pub mod sensitivity;
pub mod solver;
pub mod train;
pub mod verify;

pub use error::{Error, Result};

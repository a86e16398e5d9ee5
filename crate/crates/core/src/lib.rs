//! Diffusion l0-LMS reconstruction of sparse signals from compressive
//! measurements distributed over a simulated network.
//!
//! The crate is organised bottom-up:
//!
//! * [`signal`] generates sparse ground truth, Gaussian measurement
//!   ensembles and the row partition of the data across nodes.
//! * [`network`] grows connected topologies and builds the adaptation and
//!   combination weight matrices.
//! * [`regularizer`] holds the zero attractor, the thresholded sparsity
//!   count and the sparsity-window stop rule.
//! * [`engine`] runs the synchronous diffusion rounds (ATC, CTA, their
//!   mini-batch versions and the general three-matrix form).
//! * [`stability`] computes the step-size limits: the period product test,
//!   the reduced mean-square matrix, its spectral radius and the step-size
//!   bracket, plus numerical checks of the Kronecker spectral-radius
//!   identities the analysis relies on.
//! * [`harness`] drives Monte-Carlo experiments and writes CSV/JSON output.

pub mod engine;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod network;
pub mod regularizer;
pub mod rng;
pub mod signal;
pub mod stability;

pub use error::{Error, Result};

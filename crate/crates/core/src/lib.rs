//! Finite-volume solver for a reaction-diffusion SEIRD epidemic model with
//! density-dependent diffusion.
//!
//! The living population `n`, susceptibles `s`, infected `i` and `h = s + e`
//! are advanced by a semi-implicit scheme: `n` through a Kirchhoff-transformed
//! convex minimization, then `s`, `h`, `i` through linear M-matrix solves.

pub mod cli;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod grid;
pub mod interp;
pub mod kirchhoff;
pub mod model;
pub mod stepper;

pub use error::{Error, Result};

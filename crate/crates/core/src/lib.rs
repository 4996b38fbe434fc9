//! Quantum billiard spectra and the partial Weyl law.
//!
//! Lengths are in billiard units with `ħ = 2m = 1`, so `E = κ²`.

pub mod bessel;
pub mod classical;
pub mod error;
pub mod geometry;
pub mod quadrature;
pub mod solver;
pub mod weyl;
pub mod halfplane;
pub mod classify;

pub use error::{Error, Result};

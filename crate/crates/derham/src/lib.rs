//! Self-affine interpolation functions defined by a de Rham-type pair of
//! Mobius maps, their parameter derivatives, and numerical experiments on
//! the resulting Takagi-like functions.
//!
//! The library is organized as:
//! - [`params`]: parameter points/curves, admissibility and non-degeneracy;
//! - [`dyadic`]: exact binary expansions of rational points in [0, 1);
//! - [`jet`]: truncated Taylor-series arithmetic in the curve parameter;
//! - [`eval`]: the digit recursion computing F, its jets and increments;
//! - [`analysis`]: experiment drivers producing machine-readable reports.

pub mod analysis;
pub mod dyadic;
pub mod error;
pub mod eval;
pub mod exec;
pub mod jet;
pub mod params;

pub use error::{Error, Result};

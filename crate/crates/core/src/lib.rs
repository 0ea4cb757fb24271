//! Boundary integral methods for magnetic fields in toroidal domains.
//!
//! The crate discretizes a Fourier-parametrized torus on a tensor grid,
//! assembles the single- and double-layer operators with a corrected
//! near-singular quadrature, solves the interior and exterior Laplace
//! boundary value problems, and reconstructs divergence-free surface
//! currents that reproduce a prescribed normal field on the boundary.

// Guards like `!(x > 0.0)` reject NaN on purpose, and node loops index
// several parallel arrays at once.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bvp;
pub mod dense;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod layer_potentials;
pub mod norms;
pub mod par;
pub mod quadrature;
pub mod reconstruction;
pub mod spectral;
pub mod surface_fields;
pub mod vec3;

pub use error::{Error, Result};

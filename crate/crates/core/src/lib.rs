//! Pseudo-spectral toolkit for parabolic tent-space analysis and for the
//! small-data mild-solution theory of incompressible Navier-Stokes on a
//! periodic box.
//!
//! Everything lives on the torus `[0, L)^n`, `n = 2` or `3`, discretized on
//! an `N^n` lattice with fields stored as Fourier coefficients. On top of
//! that sit the heat semigroup and Leray projection, space-time tent and
//! square-function norms with their Carleson duals, atomic decompositions of
//! tent spaces with the associated Hardy-space machinery, the quadratic
//! Duhamel operators of the Navier-Stokes integral equation, and a Picard
//! solver with norm diagnostics.

pub mod atoms;
pub mod bilinear;
pub mod corpus;
pub mod error;
pub mod fft;
pub mod field;
pub mod geom;
pub mod grid;
pub mod io;
pub mod ops;
pub mod probes;
pub mod quad;
pub mod solver;
pub mod tent;
pub mod whitney;

pub use error::{Error, Result};

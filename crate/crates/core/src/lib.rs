//! Numerical laboratory for constant negative curvature surfaces.
//!
//! The crate follows one chain of computations: synthesize a `K = -1`
//! surface from a sine-Gordon angle field, read off its fundamental forms,
//! flatten the metric to isothermic coordinates, check that `u = ln h`
//! solves the Liouville equation `Δu = e^{2u}` weakly and strongly, and
//! develop `u` into the Poincaré disk.

pub mod chebyshev_net;
pub mod cli;
pub mod conformal;
pub mod developing;
pub mod elliptic;
pub mod error;
pub mod fundamental_forms;
pub mod grid;
pub mod io;
pub mod linalg;
mod lines;
pub mod pipeline;
pub mod weak_calculus;

pub use error::{Error, Result};
pub use grid::{Axis, Grid2D, ScalarField, TestFunction, VectorField3};

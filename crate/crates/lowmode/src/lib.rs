//! Finite-difference discretization of the variable-coefficient Poisson problem
//! `-div(kappa grad u) = f` on the unit square with homogeneous Dirichlet data,
//! together with a spectral low-mode reduction of the resulting linear system,
//! a family of baseline solvers, and a brute-force Schur-complement oracle used
//! to verify the reduction against the unreduced operator.

pub mod assembly;
pub mod error;
pub mod grid;
pub mod reduced;
pub mod schur;
pub mod solvers;
pub mod spectral;

pub use error::{Error, Result};

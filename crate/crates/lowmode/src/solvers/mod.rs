//! Baseline solvers for the assembled system `A u = F`: a banded direct
//! factorization, (preconditioned) conjugate gradients, a geometric multigrid
//! V-cycle, and conjugate gradients deflated by the spectral coarse space.

pub mod cg;
pub mod deflation;
pub mod direct;
pub mod multigrid;

pub use cg::{solve_cg, Preconditioner};
pub use deflation::solve_deflated_cg;
pub use direct::{solve_direct, BandedCholesky};
pub use multigrid::{build_mg_hierarchy, solve_mg_pcg, MgHierarchy, Smoother};

use crate::grid::GridFunction;

/// Outcome of one solver run.
///
/// `residual_history` stores the relative residual per iteration (starting at
/// the initial guess) and `energy_history` the quadratic functional
/// `1/2 u'Au - u'F`, whose monotone decrease is a defining property of
/// conjugate-gradient iterations.  Direct solvers leave both histories empty
/// and report zero iterations.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: GridFunction,
    pub iterations: usize,
    pub relative_residual: f64,
    pub wall_time: f64,
    pub solver_id: String,
    pub residual_history: Vec<f64>,
    pub energy_history: Vec<f64>,
}

/// Euclidean dot product with a fixed left-to-right accumulation order.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

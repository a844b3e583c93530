//! Geometric multigrid V-cycle for grids with `m = 2^l - 1` interior points
//! per axis, used both as a stationary iteration and as a preconditioner for
//! conjugate gradients.
//!
//! Every level re-discretizes the diffusion coefficient on its own grid
//! (no Galerkin coarsening), transfers residuals by full weighting, and
//! prolongs corrections bilinearly.  Pre- and post-smoothing run the
//! red-black Gauss-Seidel sweeps in opposite color order so one V-cycle is a
//! symmetric operator, which is what a CG preconditioner must be.

use std::time::Instant;

use super::cg::{solve_cg, Preconditioner};
use super::direct::BandedCholesky;
use super::SolveReport;
use crate::assembly::{assemble_operator, KappaAveraging, SparseOperator};
use crate::error::{Error, Result};
use crate::grid::{Grid2D, GridFunction, ScalarField};

/// Smoother used on every level above the coarsest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoother {
    /// Red-black Gauss-Seidel; colors by node parity `(i + j) % 2`.
    RedBlackGaussSeidel,
    /// Jacobi damped by `omega` (useful as a reference smoother).
    DampedJacobi { omega: f64 },
}

#[derive(Debug)]
struct MgLevel {
    grid: Grid2D,
    a: SparseOperator,
    diag: Vec<f64>,
}

/// Grid hierarchy from the coarsest `m = 3` level up to the request grid.
#[derive(Debug)]
pub struct MgHierarchy {
    /// Levels ordered coarse to fine; `levels[0]` is solved directly.
    levels: Vec<MgLevel>,
    coarse_factor: BandedCholesky,
    smoother: Smoother,
    nu1: usize,
    nu2: usize,
}

/// Builds the hierarchy for a grid with `m = 2^l - 1`, `l >= 2`, assembling
/// the coefficient on every level.
pub fn build_mg_hierarchy<F: ScalarField + ?Sized>(
    grid: Grid2D,
    kappa: &F,
    averaging: KappaAveraging,
    smoother: Smoother,
    nu1: usize,
    nu2: usize,
) -> Result<MgHierarchy> {
    let m = grid.m();
    if m < 3 || !(m + 1).is_power_of_two() {
        return Err(Error::GridIncompatible(format!(
            "multigrid needs m = 2^l - 1 with l >= 2, got m = {m}"
        )));
    }
    if let Smoother::DampedJacobi { omega } = smoother {
        if !(omega > 0.0 && omega <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Jacobi damping must lie in (0, 1], got {omega}"
            )));
        }
    }
    let mut sizes = Vec::new();
    let mut level_m = m;
    loop {
        sizes.push(level_m);
        if level_m == 3 {
            break;
        }
        level_m = (level_m - 1) / 2;
    }
    sizes.reverse();
    let mut levels = Vec::with_capacity(sizes.len());
    for level_m in sizes {
        let level_grid = Grid2D::new(level_m)?;
        let a = assemble_operator(level_grid, kappa, averaging)?;
        let diag = a.diagonal();
        levels.push(MgLevel {
            grid: level_grid,
            a,
            diag,
        });
    }
    let coarse_factor = BandedCholesky::factorize(&levels[0].a)?;
    Ok(MgHierarchy {
        levels,
        coarse_factor,
        smoother,
        nu1,
        nu2,
    })
}

/// One smoothing pass.  For red-black Gauss-Seidel, `reverse` flips the
/// color order (black first), which makes pre- and post-smoothing adjoint.
fn smooth(level: &MgLevel, u: &mut [f64], b: &[f64], smoother: Smoother, reverse: bool) {
    let m = level.grid.m();
    match smoother {
        Smoother::RedBlackGaussSeidel => {
            let colors: [usize; 2] = if reverse { [1, 0] } else { [0, 1] };
            for color in colors {
                for j in 1..=m {
                    for i in 1..=m {
                        if (i + j) % 2 != color {
                            continue;
                        }
                        let r = (j - 1) * m + (i - 1);
                        let (cols, vals) = level.a.row(r);
                        let mut s = b[r];
                        for (&c, &v) in cols.iter().zip(vals) {
                            if c != r {
                                s -= v * u[c];
                            }
                        }
                        u[r] = s / level.diag[r];
                    }
                }
            }
        }
        Smoother::DampedJacobi { omega } => {
            let au = level.a.matvec(u);
            for r in 0..u.len() {
                u[r] += omega * (b[r] - au[r]) / level.diag[r];
            }
        }
    }
}

/// Full-weighting restriction from the fine level to the coarse one.
fn restrict(fine: Grid2D, coarse: Grid2D, r: &[f64]) -> Vec<f64> {
    let mf = fine.m();
    let mc = coarse.m();
    let at = |i: usize, j: usize| r[(j - 1) * mf + (i - 1)];
    let mut rc = vec![0.0; coarse.n()];
    for jc in 1..=mc {
        let j = 2 * jc;
        for ic in 1..=mc {
            let i = 2 * ic;
            rc[(jc - 1) * mc + (ic - 1)] = (4.0 * at(i, j)
                + 2.0 * (at(i - 1, j) + at(i + 1, j) + at(i, j - 1) + at(i, j + 1))
                + at(i - 1, j - 1)
                + at(i + 1, j - 1)
                + at(i - 1, j + 1)
                + at(i + 1, j + 1))
                / 16.0;
        }
    }
    rc
}

/// Bilinear prolongation (four times the transpose of full weighting).
fn prolong(coarse: Grid2D, fine: Grid2D, e: &[f64]) -> Vec<f64> {
    let mc = coarse.m();
    let mf = fine.m();
    let at = |i: usize, j: usize| -> f64 {
        if i == 0 || j == 0 || i > mc || j > mc {
            0.0
        } else {
            e[(j - 1) * mc + (i - 1)]
        }
    };
    let mut out = vec![0.0; fine.n()];
    for j in 1..=mf {
        for i in 1..=mf {
            let v = match (i % 2, j % 2) {
                (0, 0) => at(i / 2, j / 2),
                (1, 0) => 0.5 * (at(i / 2, j / 2) + at(i / 2 + 1, j / 2)),
                (0, 1) => 0.5 * (at(i / 2, j / 2) + at(i / 2, j / 2 + 1)),
                _ => {
                    0.25 * (at(i / 2, j / 2)
                        + at(i / 2 + 1, j / 2)
                        + at(i / 2, j / 2 + 1)
                        + at(i / 2 + 1, j / 2 + 1))
                }
            };
            out[(j - 1) * mf + (i - 1)] = v;
        }
    }
    out
}

impl MgHierarchy {
    /// The grid of the finest level.
    pub fn finest_grid(&self) -> Grid2D {
        self.levels[self.levels.len() - 1].grid
    }

    /// Number of levels including the coarsest.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Operator on the finest level.
    pub fn finest_operator(&self) -> &SparseOperator {
        &self.levels[self.levels.len() - 1].a
    }

    fn cycle(&self, level: usize, u: &mut [f64], b: &[f64]) {
        if level == 0 {
            let x = self.coarse_factor.solve(b);
            u.copy_from_slice(&x);
            return;
        }
        let lvl = &self.levels[level];
        for _ in 0..self.nu1 {
            smooth(lvl, u, b, self.smoother, false);
        }
        let au = lvl.a.matvec(u);
        let r: Vec<f64> = b.iter().zip(&au).map(|(bk, ak)| bk - ak).collect();
        let coarse_grid = self.levels[level - 1].grid;
        let rc = restrict(lvl.grid, coarse_grid, &r);
        let mut ec = vec![0.0; coarse_grid.n()];
        self.cycle(level - 1, &mut ec, &rc);
        let correction = prolong(coarse_grid, lvl.grid, &ec);
        for (uk, ck) in u.iter_mut().zip(&correction) {
            *uk += ck;
        }
        for _ in 0..self.nu2 {
            smooth(lvl, u, b, self.smoother, true);
        }
    }

    /// One V-cycle on the finest level, updating `u` in place.
    pub fn v_cycle(&self, u: &mut GridFunction, b: &GridFunction) -> Result<()> {
        let n = self.finest_grid().n();
        if u.values().len() != n || b.values().len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: u.values().len(),
                context: "V-cycle input",
            });
        }
        self.cycle(self.levels.len() - 1, u.values_mut(), b.values());
        Ok(())
    }
}

impl Preconditioner for MgHierarchy {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; r.len()];
        self.cycle(self.levels.len() - 1, &mut z, r);
        z
    }

    fn id(&self) -> String {
        format!("mg-v{}{}", self.nu1, self.nu2)
    }
}

/// Conjugate gradients preconditioned by one V-cycle per application.
pub fn solve_mg_pcg(
    a: &SparseOperator,
    f: &GridFunction,
    hierarchy: &MgHierarchy,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    if hierarchy.finest_grid().n() != f.values().len() {
        return Err(Error::DimensionMismatch {
            expected: hierarchy.finest_grid().n(),
            got: f.values().len(),
            context: "multigrid preconditioner grid",
        });
    }
    let start = Instant::now();
    let mut report = solve_cg(a, f, tol, max_iter, Some(hierarchy))?;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

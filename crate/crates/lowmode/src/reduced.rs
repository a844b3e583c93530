//! Galerkin reduction of the assembled system onto the low-mode basis:
//! form `A_LL = B'AB` and `f_M = B'F`, solve the small dense system, and
//! lift the coefficients back to the grid.
//!
//! The reduced solution is the a-orthogonal projection of the full discrete
//! solution onto the span of the basis, so it is simultaneously the best
//! approximation in the energy norm; both properties are exercised by the
//! integration tests.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use crate::assembly::SparseOperator;
use crate::error::{Error, Result};
use crate::grid::{Grid2D, GridFunction};
use crate::spectral::{Normalization, SpectralBasis};

/// Hard cap on the reduced dimension: the dense path is meant for genuinely
/// small systems.
pub const MAX_REDUCED_DIM: usize = 1024;

/// Row-block length used when accumulating `B'(AB)`.  Fixed so that the
/// summation tree, and therefore the result, does not depend on thread count.
const ROW_BLOCK: usize = 4096;

/// The projected system together with its bookkeeping.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    a_ll: DMatrix<f64>,
    f_m: DVector<f64>,
    basis_id: String,
    assembly_time: f64,
    solve_time: f64,
}

impl ReducedSystem {
    /// The reduced operator `B'AB` (symmetric by construction).
    pub fn a_ll(&self) -> &DMatrix<f64> {
        &self.a_ll
    }

    /// The reduced right-hand side `B'F`.
    pub fn f_m(&self) -> &DVector<f64> {
        &self.f_m
    }

    pub fn k(&self) -> usize {
        self.f_m.len()
    }

    /// Identifier of the basis this system was projected onto.
    pub fn basis_id(&self) -> &str {
        &self.basis_id
    }

    /// Seconds spent forming `B'AB` and `B'F`.
    pub fn assembly_time(&self) -> f64 {
        self.assembly_time
    }

    /// Seconds spent in the most recent dense solve (zero before any solve).
    pub fn solve_time(&self) -> f64 {
        self.solve_time
    }
}

/// Computes `B'(AB)` with a deterministic blocked reduction, then averages
/// the result with its transpose so the reduced operator is symmetric down
/// to the last bit.
fn project_operator(a: &SparseOperator, basis: &SpectralBasis) -> DMatrix<f64> {
    let n = basis.grid().n();
    let k = basis.k();
    let cols = basis.columns_flat();
    // G = A B, one sparse matvec per column.
    let mut g = vec![0.0; n * k];
    g.par_chunks_mut(n)
        .enumerate()
        .for_each(|(c, out)| a.matvec_into(&cols[c * n..(c + 1) * n], out));
    // X = B' G, accumulated block-row by block-row in a fixed order.
    let n_blocks = n.div_ceil(ROW_BLOCK);
    let partials: Vec<Vec<f64>> = (0..n_blocks)
        .into_par_iter()
        .map(|blk| {
            let r0 = blk * ROW_BLOCK;
            let r1 = n.min(r0 + ROW_BLOCK);
            let mut part = vec![0.0; k * k];
            for ci in 0..k {
                let bi = &cols[ci * n + r0..ci * n + r1];
                for cj in 0..k {
                    let gj = &g[cj * n + r0..cj * n + r1];
                    let mut s = 0.0;
                    for (x, y) in bi.iter().zip(gj) {
                        s += x * y;
                    }
                    part[ci * k + cj] = s;
                }
            }
            part
        })
        .collect();
    let mut x = vec![0.0; k * k];
    for part in &partials {
        for (acc, p) in x.iter_mut().zip(part) {
            *acc += p;
        }
    }
    DMatrix::from_fn(k, k, |i, j| 0.5 * (x[i * k + j] + x[j * k + i]))
}

/// Projects the assembled system onto the basis: `A_LL = B'AB`, `f_M = B'F`.
pub fn project_system(
    a: &SparseOperator,
    f: &GridFunction,
    basis: &SpectralBasis,
) -> Result<ReducedSystem> {
    let n = basis.grid().n();
    if a.n_rows() != n || a.n_cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.n_rows(),
            context: "operator projection",
        });
    }
    if f.values().len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: f.values().len(),
            context: "right-hand side projection",
        });
    }
    let k = basis.k();
    if k > MAX_REDUCED_DIM {
        return Err(Error::Feasibility(format!(
            "reduced dimension {k} exceeds the dense-path cap {MAX_REDUCED_DIM}"
        )));
    }
    let start = Instant::now();
    let a_ll = project_operator(a, basis);
    let fv = f.values();
    let f_m = DVector::from_fn(k, |c, _| {
        let col = basis.column(c);
        let mut s = 0.0;
        for (x, y) in col.iter().zip(fv) {
            s += x * y;
        }
        s
    });
    Ok(ReducedSystem {
        a_ll,
        f_m,
        basis_id: basis.id(),
        assembly_time: start.elapsed().as_secs_f64(),
        solve_time: 0.0,
    })
}

/// Solves a small symmetric positive definite dense system by Cholesky.
pub fn solve_spd_dense(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != rhs.len() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: rhs.len(),
            context: "dense SPD solve",
        });
    }
    let chol = Cholesky::new(a.clone()).ok_or_else(|| {
        Error::Definiteness("dense Cholesky failed; matrix is not positive definite".into())
    })?;
    Ok(chol.solve(rhs))
}

/// Solves the reduced system, recording the solve time on the system.
pub fn solve_reduced(system: &mut ReducedSystem) -> Result<DVector<f64>> {
    let start = Instant::now();
    let z = solve_spd_dense(&system.a_ll, &system.f_m)?;
    system.solve_time = start.elapsed().as_secs_f64();
    Ok(z)
}

/// Lifts reduced coefficients back to the grid: `u = B z`.
pub fn lift(basis: &SpectralBasis, z: &DVector<f64>) -> Result<GridFunction> {
    if z.len() != basis.k() {
        return Err(Error::DimensionMismatch {
            expected: basis.k(),
            got: z.len(),
            context: "lift coefficients",
        });
    }
    let n = basis.grid().n();
    let mut u = vec![0.0; n];
    for c in 0..basis.k() {
        let zc = z[c];
        if zc == 0.0 {
            continue;
        }
        for (acc, b) in u.iter_mut().zip(basis.column(c)) {
            *acc += zc * b;
        }
    }
    GridFunction::new(basis.grid(), u)
}

/// Energy norm `sqrt(v' A v)` induced by an SPD operator.
pub fn energy_norm(a: &SparseOperator, v: &[f64]) -> Result<f64> {
    if a.n_cols() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: a.n_cols(),
            got: v.len(),
            context: "energy norm",
        });
    }
    let q = a.quadratic_form(v);
    let scale: f64 = v.iter().map(|x| x * x).sum();
    if q < -1e-12 * scale.max(1.0) {
        return Err(Error::Definiteness(format!(
            "quadratic form {q:.3e} is negative"
        )));
    }
    Ok(q.max(0.0).sqrt())
}

/// Coarse residual `B'(F - A u)`; identically zero (to rounding) at the
/// reduced solution, which is the Galerkin orthogonality property.
pub fn coarse_residual(
    a: &SparseOperator,
    f: &GridFunction,
    basis: &SpectralBasis,
    u: &GridFunction,
) -> Result<Vec<f64>> {
    let r = crate::assembly::residual(a, u, f)?;
    let rv = r.values();
    Ok((0..basis.k())
        .map(|c| {
            let mut s = 0.0;
            for (x, y) in basis.column(c).iter().zip(rv) {
                s += x * y;
            }
            s
        })
        .collect())
}

/// Spectral condition number of a symmetric positive definite dense matrix.
pub fn condition_number(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
            context: "condition number",
        });
    }
    let asym = (a - a.transpose()).abs().max();
    let scale = a.abs().max();
    if asym > 1e-10 * scale.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "condition number expects a symmetric matrix (asymmetry {asym:.3e})"
        )));
    }
    let eig = a.clone().symmetric_eigenvalues();
    let min = eig.min();
    let max = eig.max();
    if min <= 0.0 {
        return Err(Error::Definiteness(format!(
            "smallest eigenvalue {min:.3e} is not positive"
        )));
    }
    Ok(max / min)
}

/// Wall-clock breakdown of the reduced pipeline.
#[derive(Debug, Clone, Copy)]
pub struct PipelineTimes {
    pub basis: f64,
    pub project: f64,
    pub solve: f64,
    pub lift: f64,
}

impl PipelineTimes {
    /// Full pipeline cost including basis construction.
    pub fn total(&self) -> f64 {
        self.basis + self.project + self.solve + self.lift
    }

    /// Cost with the (amortizable) basis construction excluded.
    pub fn total_without_basis(&self) -> f64 {
        self.project + self.solve + self.lift
    }
}

/// Result of the full reduce-project-solve-lift pipeline.
pub struct ReducedSolution {
    pub u: GridFunction,
    pub z: DVector<f64>,
    pub system: ReducedSystem,
    pub times: PipelineTimes,
}

/// Runs the whole reduction pipeline for a cutoff `M`: build basis, project,
/// solve, lift.
pub fn reduce_and_solve(
    a: &SparseOperator,
    f: &GridFunction,
    grid: Grid2D,
    cutoff: usize,
    normalization: Normalization,
) -> Result<ReducedSolution> {
    let t0 = Instant::now();
    let basis = SpectralBasis::build(grid, cutoff, normalization)?;
    let basis_time = t0.elapsed().as_secs_f64();
    let mut system = project_system(a, f, &basis)?;
    let z = solve_reduced(&mut system)?;
    let t1 = Instant::now();
    let u = lift(&basis, &z)?;
    let lift_time = t1.elapsed().as_secs_f64();
    let times = PipelineTimes {
        basis: basis_time,
        project: system.assembly_time,
        solve: system.solve_time,
        lift: lift_time,
    };
    Ok(ReducedSolution {
        u,
        z,
        system,
        times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{
        assemble_operator, assemble_rhs, manufactured_problem, KappaAveraging,
    };
    use crate::grid::sample_field;
    use crate::solvers::solve_direct;
    use crate::spectral::{discrete_eigenvalue, mode_column};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn laplacian(grid: Grid2D) -> SparseOperator {
        assemble_operator(grid, &|_x: f64, _y: f64| 1.0, KappaAveraging::Midpoint).unwrap()
    }

    #[test]
    fn constant_coefficient_reduction_is_diagonal() {
        // Raw sine columns are A-orthogonal eigenvectors, so B'AB is the
        // diagonal of discrete eigenvalues times the squared column norm.
        let grid = Grid2D::new(7).unwrap();
        let a = laplacian(grid);
        let basis = SpectralBasis::build(grid, 7, Normalization::Raw).unwrap();
        let f = GridFunction::zeros(grid);
        let rs = project_system(&a, &f, &basis).unwrap();
        let col_sq = (8.0f64 / 2.0).powi(2);
        let max_diag = rs
            .a_ll()
            .diagonal()
            .iter()
            .fold(0.0f64, |acc, &d| acc.max(d));
        for ci in 0..basis.k() {
            let (p, q) = basis.mode_of_column(ci);
            let lambda = discrete_eigenvalue(grid, p, q).unwrap();
            for cj in 0..basis.k() {
                let entry = rs.a_ll()[(ci, cj)];
                let target = if ci == cj { lambda * col_sq } else { 0.0 };
                assert!(
                    (entry - target).abs() <= 1e-12 * max_diag,
                    "entry ({ci},{cj}) = {entry}, target {target}"
                );
            }
        }
        assert!(rs.f_m().iter().all(|&v| v == 0.0));
        assert_eq!(rs.basis_id(), "m7-M7-raw");
    }

    #[test]
    fn reduced_dimension_is_capped() {
        let grid = Grid2D::new(63).unwrap();
        let a = laplacian(grid);
        let f = GridFunction::zeros(grid);
        let basis = SpectralBasis::build(grid, 33, Normalization::Raw).unwrap();
        let err = project_system(&a, &f, &basis).unwrap_err();
        assert_eq!(err.category(), "feasibility");
    }

    #[test]
    fn dense_solver_worked_examples() {
        let id = DMatrix::identity(3, 3);
        let rhs = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let z = solve_spd_dense(&id, &rhs).unwrap();
        assert_eq!(z, rhs);
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let z = solve_spd_dense(&diag, &DVector::from_vec(vec![2.0, 2.0])).unwrap();
        assert_relative_eq!(z[0], 1.0);
        assert_relative_eq!(z[1], 0.5);
        // Indefinite input is rejected.
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = solve_spd_dense(&bad, &DVector::zeros(2)).unwrap_err();
        assert_eq!(err.category(), "definiteness");
    }

    #[test]
    fn random_spd_solve_leaves_tiny_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = 16;
        let r = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
        let spd = &r * r.transpose() + DMatrix::identity(k, k);
        let rhs = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0));
        let z = solve_spd_dense(&spd, &rhs).unwrap();
        let res = (&spd * &z - &rhs).norm() / rhs.norm();
        assert!(res <= 1e-12, "relative residual {res}");
    }

    #[test]
    fn lift_reproduces_single_modes() {
        let grid = Grid2D::new(9).unwrap();
        let basis = SpectralBasis::build(grid, 4, Normalization::Raw).unwrap();
        let z = DVector::zeros(16);
        assert!(lift(&basis, &z).unwrap().values().iter().all(|&v| v == 0.0));
        let mut z = DVector::zeros(16);
        z[basis.k() - 1] = 1.0; // mode (4, 4)
        let lifted = lift(&basis, &z).unwrap();
        let expected = mode_column(grid, 4, 4, Normalization::Raw).unwrap();
        assert_eq!(lifted.values(), &expected[..]);
    }

    #[test]
    fn in_span_problem_is_solved_exactly() {
        // For kappa = 1 and forcing proportional to mode (1, 1), the full
        // solution lies in every basis span, so reduction changes nothing.
        let grid = Grid2D::new(15).unwrap();
        let a = laplacian(grid);
        let f = sample_field(grid, &|x: f64, y: f64| {
            19.0 * (PI * x).sin() * (PI * y).sin()
        })
        .unwrap();
        let full = solve_direct(&a, &f).unwrap();
        for cutoff in [1, 3] {
            let red = reduce_and_solve(&a, &f, grid, cutoff, Normalization::MassOrthonormal)
                .unwrap();
            let diff: f64 = red
                .u
                .values()
                .iter()
                .zip(full.solution.values())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(
                diff <= 1e-10 * full.solution.max_norm(),
                "cutoff {cutoff}: max diff {diff}"
            );
        }
    }

    #[test]
    fn projecting_the_lifted_solution_is_idempotent() {
        let grid = Grid2D::new(21).unwrap();
        let problem = manufactured_problem("example1").unwrap();
        let a = assemble_operator(grid, problem.kappa(), KappaAveraging::Midpoint).unwrap();
        let f = assemble_rhs(grid, problem.forcing()).unwrap();
        let red = reduce_and_solve(&a, &f, grid, 6, Normalization::MassOrthonormal).unwrap();
        // Project A u_RD as a fresh right-hand side; solving again must give
        // the same coefficients because u_RD already lies in the span.
        let au = crate::assembly::apply_operator(&a, &red.u).unwrap();
        let basis = SpectralBasis::build(grid, 6, Normalization::MassOrthonormal).unwrap();
        let mut rs2 = project_system(&a, &au, &basis).unwrap();
        let z2 = solve_reduced(&mut rs2).unwrap();
        let scale = red.z.abs().max();
        for (a_, b_) in red.z.iter().zip(z2.iter()) {
            assert!((a_ - b_).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn energy_norm_closed_form_and_guard() {
        let grid = Grid2D::new(11).unwrap();
        let a = laplacian(grid);
        let v = mode_column(grid, 2, 3, Normalization::Raw).unwrap();
        let lambda = discrete_eigenvalue(grid, 2, 3).unwrap();
        let expected = (lambda).sqrt() * (12.0 / 2.0);
        assert_relative_eq!(energy_norm(&a, &v).unwrap(), expected, max_relative = 1e-12);
        // Scaling by alpha scales the norm by |alpha|.
        let scaled: Vec<f64> = v.iter().map(|x| -2.5 * x).collect();
        assert_relative_eq!(
            energy_norm(&a, &scaled).unwrap(),
            2.5 * expected,
            max_relative = 1e-12
        );
        // A negated operator is flagged.
        let mut row_ptr = vec![0usize];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in 0..a.n_rows() {
            let (cols, vals) = a.row(r);
            col_idx.extend_from_slice(cols);
            values.extend(vals.iter().map(|v| -v));
            row_ptr.push(col_idx.len());
        }
        let neg =
            SparseOperator::from_csr(a.n_rows(), a.n_cols(), row_ptr, col_idx, values).unwrap();
        assert!(energy_norm(&neg, &v).is_err());
    }

    #[test]
    fn condition_number_worked_examples() {
        assert_relative_eq!(condition_number(&DMatrix::identity(5, 5)).unwrap(), 1.0);
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 4.0]));
        assert_relative_eq!(condition_number(&diag).unwrap(), 4.0, max_relative = 1e-13);
        let skew = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(condition_number(&skew).is_err());
        let indef = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(condition_number(&indef).is_err());
    }

    #[test]
    fn constant_coefficient_condition_number_closed_form() {
        // For kappa = 1 and M = 2 the reduced operator is diagonal with the
        // four lowest discrete eigenvalues: kappa_2 = lambda(2,2)/lambda(1,1).
        let grid = Grid2D::new(63).unwrap();
        let a = laplacian(grid);
        let f = GridFunction::zeros(grid);
        let basis = SpectralBasis::build(grid, 2, Normalization::MassOrthonormal).unwrap();
        let rs = project_system(&a, &f, &basis).unwrap();
        let kappa2 = condition_number(rs.a_ll()).unwrap();
        let expected = discrete_eigenvalue(grid, 2, 2).unwrap()
            / discrete_eigenvalue(grid, 1, 1).unwrap();
        assert_relative_eq!(kappa2, expected, max_relative = 1e-10);
        assert!((kappa2 - 4.0).abs() < 0.01);
    }

    #[test]
    fn pipeline_times_are_populated() {
        let grid = Grid2D::new(15).unwrap();
        let problem = manufactured_problem("example1").unwrap();
        let a = assemble_operator(grid, problem.kappa(), KappaAveraging::Midpoint).unwrap();
        let f = assemble_rhs(grid, problem.forcing()).unwrap();
        let red = reduce_and_solve(&a, &f, grid, 4, Normalization::MassOrthonormal).unwrap();
        assert!(red.times.total() >= red.times.total_without_basis());
        assert!(red.times.total() > 0.0);
        assert_eq!(red.system.basis_id(), "m15-M4-massortho");
        assert!(red.system.solve_time() >= 0.0);
    }
}

//! Brute-force verification oracle: the assembled operator expressed in the
//! *complete* sine basis, its low/high block structure, and the exact Schur
//! complement of the high block.
//!
//! The stored matrix is the bilinear-form representation `Q'(h^2 A)Q` with
//! `Q` the mass-orthonormal full sine basis.  The `h^2` mass weighting makes
//! the entries mesh-independent quantities on the continuum eigenvalue
//! scale: for `kappa = 1` the diagonal holds exactly the discrete
//! eigenvalues, the coupling blocks vanish to rounding, and the coercivity
//! of the high block is comparable with `lambda_{M+1}` no matter the grid.
//! Everything here is dense `N x N`, hence the deliberately small size
//! guard; this module exists to check the reduction, not to compete with it.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use crate::assembly::SparseOperator;
use crate::error::{Error, Result};
use crate::grid::{Grid2D, GridFunction};
use crate::reduced::energy_norm;
use crate::spectral::{dst2_analyze, dst2_synthesize, eigenvalue, mode_column, Normalization};

/// Largest grid the dense transform will accept.
pub const MAX_ORACLE_M: usize = 63;

/// The operator congruence-transformed into the full sine basis.
#[derive(Debug)]
pub struct BlockedOperator {
    grid: Grid2D,
    /// `Q'(h^2 A)Q`, dense, mode-flat indices `(p - 1) m + (q - 1)`.
    a_tilde: DMatrix<f64>,
}

/// Exact Schur analysis of one low/high splitting.
pub struct SchurAnalysis {
    /// Schur complement `S = A_LL - A_LH A_HH^-1 A_HL`.
    pub s: DMatrix<f64>,
    /// Spectral norm of the correction `A_LL - S`.
    pub gap: f64,
    /// Spectral norm of the coupling block `A_LH`.
    pub coupling: f64,
    /// Smallest eigenvalue of `A_HH`.
    pub alpha_h: f64,
    /// `coupling^2 / alpha_h`, the upper bound the gap must respect.
    pub bound_rhs: f64,
}

impl SchurAnalysis {
    /// Whether `gap <= coupling^2 / alpha_h` holds (with a small additive
    /// slack for rounding).
    pub fn certificate_holds(&self) -> bool {
        self.gap <= self.bound_rhs + 1e-8
    }
}

/// Side-by-side comparison of exact static condensation and the reduction.
pub struct SchurComparison {
    /// Low coefficients of the full solution (via the Schur complement).
    pub y_low: DVector<f64>,
    /// Low coefficients of the reduced (Galerkin) solution.
    pub z_reduced: DVector<f64>,
    pub u_schur: GridFunction,
    pub u_reduced: GridFunction,
    /// Energy-norm distance between the two lifted solutions.
    pub diff_energy: f64,
}

/// One cutoff in the decay study.
pub struct SchurDecayRow {
    pub cutoff: usize,
    /// Continuum eigenvalue `lambda_{M+1, M+1}` marking the start of the tail.
    pub lambda_next: f64,
    pub coupling: f64,
    pub alpha_h: f64,
    pub gap: f64,
    pub bound_rhs: f64,
}

/// Decay of the coupling and gap across a family of cutoffs.
pub struct SchurDecayReport {
    pub grid_id: String,
    pub rows: Vec<SchurDecayRow>,
    /// Least-squares slope of `log coupling` against `log lambda_next`.
    pub fitted_slope: f64,
}

impl BlockedOperator {
    /// Transforms the operator into the full sine basis.  Dense `O(N^2)`
    /// storage and `O(m^5)` work: guarded to `m <= 63`.
    pub fn transform_full(a: &SparseOperator, grid: Grid2D) -> Result<Self> {
        if grid.m() > MAX_ORACLE_M {
            return Err(Error::Feasibility(format!(
                "dense oracle transform capped at m = {MAX_ORACLE_M}, got m = {}",
                grid.m()
            )));
        }
        let n = grid.n();
        if a.n_rows() != n || a.n_cols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a.n_rows(),
                context: "oracle transform",
            });
        }
        let m = grid.m();
        let mut a_tilde = DMatrix::zeros(n, n);
        // Column k of Q'(h^2 A)Q is analyze(A q_k) / 2: analysis already
        // divides by the raw column norm squared, and the remaining factor
        // collapses because h^2 (m + 1)^2 = 1.
        a_tilde
            .as_mut_slice()
            .par_chunks_mut(n)
            .enumerate()
            .try_for_each(|(k, col)| -> Result<()> {
                let (p, q) = (k / m + 1, k % m + 1);
                let qk = mode_column(grid, p, q, Normalization::MassOrthonormal)?;
                let w = GridFunction::new(grid, a.matvec(&qk))?;
                let c = dst2_analyze(grid, &w)?;
                for (out, ck) in col.iter_mut().zip(&c) {
                    *out = 0.5 * ck;
                }
                Ok(())
            })?;
        Ok(BlockedOperator { grid, a_tilde })
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    pub fn a_tilde(&self) -> &DMatrix<f64> {
        &self.a_tilde
    }

    /// Flat indices of the low block `{(p, q) : p, q <= cutoff}`, ascending.
    pub fn low_indices(&self, cutoff: usize) -> Vec<usize> {
        let m = self.grid.m();
        let mut idx = Vec::with_capacity(cutoff * cutoff);
        for p in 0..cutoff {
            for q in 0..cutoff {
                idx.push(p * m + q);
            }
        }
        idx.sort_unstable();
        idx
    }

    /// Complement of [`low_indices`](Self::low_indices), ascending.
    pub fn high_indices(&self, cutoff: usize) -> Vec<usize> {
        let m = self.grid.m();
        let low: std::collections::HashSet<usize> =
            self.low_indices(cutoff).into_iter().collect();
        (0..m * m).filter(|i| !low.contains(i)).collect()
    }

    fn check_cutoff(&self, cutoff: usize) -> Result<()> {
        if cutoff == 0 || cutoff >= self.grid.m() {
            return Err(Error::InvalidArgument(format!(
                "oracle cutoff must satisfy 1 <= M < m = {}, got {cutoff}",
                self.grid.m()
            )));
        }
        Ok(())
    }

    /// Spectral norm of the coupling block `A_LH`.
    pub fn coupling_norm(&self, cutoff: usize) -> Result<f64> {
        self.check_cutoff(cutoff)?;
        let low = self.low_indices(cutoff);
        let high = self.high_indices(cutoff);
        let a_lh = self
            .a_tilde
            .select_rows(low.iter())
            .select_columns(high.iter());
        Ok(spectral_norm_tall(&a_lh))
    }

    /// Exact Schur complement of the high block, with the coupling norm,
    /// the high-block coercivity, and the resulting gap certificate.
    pub fn exact_schur(&self, cutoff: usize) -> Result<SchurAnalysis> {
        self.check_cutoff(cutoff)?;
        let low = self.low_indices(cutoff);
        let high = self.high_indices(cutoff);
        let a_ll = self
            .a_tilde
            .select_rows(low.iter())
            .select_columns(low.iter());
        let a_lh = self
            .a_tilde
            .select_rows(low.iter())
            .select_columns(high.iter());
        let a_hh = self
            .a_tilde
            .select_rows(high.iter())
            .select_columns(high.iter());
        let coupling = spectral_norm_tall(&a_lh);
        let chol = Cholesky::new(a_hh.clone()).ok_or_else(|| {
            Error::Definiteness("high block A_HH is not positive definite".into())
        })?;
        let x = chol.solve(&a_lh.transpose());
        let correction = &a_lh * &x;
        let correction_sym = 0.5 * (&correction + correction.transpose());
        let gap = correction_sym
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0f64, |acc, &l| acc.max(l.abs()));
        let s = a_ll - correction_sym;
        let alpha_h = smallest_eigenvalue(&a_hh, &chol);
        Ok(SchurAnalysis {
            s,
            gap,
            coupling,
            alpha_h,
            bound_rhs: coupling * coupling / alpha_h,
        })
    }

    /// Solves the low block two ways: exact static condensation through the
    /// Schur complement, and the plain Galerkin truncation `A_LL z = f_L`.
    pub fn reduced_vs_schur(
        &self,
        a: &SparseOperator,
        f: &GridFunction,
        cutoff: usize,
    ) -> Result<SchurComparison> {
        self.check_cutoff(cutoff)?;
        let m = self.grid.m();
        let n = self.grid.n();
        if f.values().len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: f.values().len(),
                context: "oracle right-hand side",
            });
        }
        // Transformed load: Q'(h^2 F) = analyze(F) / 2.
        let fc = dst2_analyze(self.grid, f)?;
        let f_tilde = DVector::from_iterator(n, fc.iter().map(|c| 0.5 * c));
        let low = self.low_indices(cutoff);
        let high = self.high_indices(cutoff);
        let f_l = f_tilde.select_rows(low.iter());
        let f_h = f_tilde.select_rows(high.iter());
        let a_ll = self
            .a_tilde
            .select_rows(low.iter())
            .select_columns(low.iter());
        let a_lh = self
            .a_tilde
            .select_rows(low.iter())
            .select_columns(high.iter());
        let a_hh = self
            .a_tilde
            .select_rows(high.iter())
            .select_columns(high.iter());
        let chol_hh = Cholesky::new(a_hh).ok_or_else(|| {
            Error::Definiteness("high block A_HH is not positive definite".into())
        })?;
        let x = chol_hh.solve(&a_lh.transpose());
        let s = &a_ll - &a_lh * &x;
        let s_sym = 0.5 * (&s + s.transpose());
        let rhs = &f_l - &a_lh * chol_hh.solve(&f_h);
        let y_low = Cholesky::new(s_sym)
            .ok_or_else(|| Error::Definiteness("Schur complement not positive definite".into()))?
            .solve(&rhs);
        let z_reduced = Cholesky::new(a_ll)
            .ok_or_else(|| Error::Definiteness("low block A_LL not positive definite".into()))?
            .solve(&f_l);
        // Lift both through the synthesis: mass-orthonormal coefficient y
        // corresponds to raw coefficient 2 y.
        let mut c_schur = vec![0.0; n];
        let mut c_red = vec![0.0; n];
        for (slot, &flat) in low.iter().enumerate() {
            c_schur[flat] = 2.0 * y_low[slot];
            c_red[flat] = 2.0 * z_reduced[slot];
        }
        let u_schur = dst2_synthesize(self.grid, &c_schur)?;
        let u_reduced = dst2_synthesize(self.grid, &c_red)?;
        let diff: Vec<f64> = u_schur
            .values()
            .iter()
            .zip(u_reduced.values())
            .map(|(x, y)| x - y)
            .collect();
        let diff_energy = energy_norm(a, &diff)?;
        let _ = m;
        Ok(SchurComparison {
            y_low,
            z_reduced,
            u_schur,
            u_reduced,
            diff_energy,
        })
    }
}

/// Spectral norm via the eigenvalues of the small Gram matrix `B B'`.
fn spectral_norm_tall(b: &DMatrix<f64>) -> f64 {
    let gram = b * b.transpose();
    let sym = 0.5 * (&gram + gram.transpose());
    sym.symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, &l| acc.max(l.max(0.0)))
        .sqrt()
}

/// Smallest eigenvalue of an SPD matrix by inverse power iteration reusing
/// its Cholesky factor; deterministic start vector.
fn smallest_eigenvalue(a: &DMatrix<f64>, chol: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let n = a.nrows();
    let mut x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut prev = 0.0f64;
    for _ in 0..500 {
        let y = chol.solve(&x);
        let rayleigh = x.dot(&y); // x' A^-1 x for normalized x
        let norm = y.norm();
        x = y / norm;
        if (rayleigh - prev).abs() <= 1e-12 * rayleigh.abs() {
            break;
        }
        prev = rayleigh;
    }
    // One Rayleigh quotient against A itself tightens the estimate.
    let ax = a * &x;
    x.dot(&ax)
}

/// Runs the full oracle over a family of cutoffs and fits the decay of the
/// coupling norm against the first neglected eigenvalue.
pub fn schur_decay_report(
    a: &SparseOperator,
    grid: Grid2D,
    cutoffs: &[usize],
) -> Result<SchurDecayReport> {
    if cutoffs.is_empty() {
        return Err(Error::InvalidArgument(
            "decay report needs at least one cutoff".into(),
        ));
    }
    let blocked = BlockedOperator::transform_full(a, grid)?;
    let mut rows = Vec::with_capacity(cutoffs.len());
    for &cutoff in cutoffs {
        let analysis = blocked.exact_schur(cutoff)?;
        rows.push(SchurDecayRow {
            cutoff,
            lambda_next: eigenvalue(cutoff + 1, cutoff + 1)?,
            coupling: analysis.coupling,
            alpha_h: analysis.alpha_h,
            gap: analysis.gap,
            bound_rhs: analysis.bound_rhs,
        });
    }
    let fitted_slope = fit_loglog_slope(
        rows.iter().map(|r| r.lambda_next).collect::<Vec<_>>().as_slice(),
        rows.iter().map(|r| r.coupling).collect::<Vec<_>>().as_slice(),
    );
    Ok(SchurDecayReport {
        grid_id: format!("m{}", grid.m()),
        rows,
        fitted_slope,
    })
}

/// Least-squares slope of `log y` against `log x`.  Pairs with a
/// non-positive component are skipped; returns 0 when fewer than two
/// usable pairs remain.
pub fn fit_loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(&a, &b)| a > 0.0 && b > 0.0)
        .map(|(&a, &b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (px, py) in pts {
        num += (px - mean_x) * (py - mean_y);
        den += (px - mean_x) * (px - mean_x);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{
        assemble_operator, assemble_rhs, manufactured_problem, KappaAveraging,
    };
    use crate::solvers::solve_direct;
    use crate::spectral::discrete_eigenvalue;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn blocked_for(m: usize, name: &str) -> (Grid2D, SparseOperator, BlockedOperator) {
        let grid = Grid2D::new(m).unwrap();
        let problem = manufactured_problem(name).unwrap();
        let a = assemble_operator(grid, problem.kappa(), KappaAveraging::Midpoint).unwrap();
        let blocked = BlockedOperator::transform_full(&a, grid).unwrap();
        (grid, a, blocked)
    }

    #[test]
    fn constant_coefficient_transform_is_diagonal() {
        let (grid, _, blocked) = blocked_for(9, "constant");
        let m = grid.m();
        let at = blocked.a_tilde();
        let max_diag = at.diagonal().iter().fold(0.0f64, |a, &d| a.max(d));
        for p in 1..=m {
            for q in 1..=m {
                let k = (p - 1) * m + (q - 1);
                let lambda = discrete_eigenvalue(grid, p, q).unwrap();
                assert_relative_eq!(at[(k, k)], lambda, max_relative = 1e-10);
                for l in 0..grid.n() {
                    if l != k {
                        assert!(
                            at[(l, k)].abs() <= 1e-10 * max_diag,
                            "off-diagonal ({l},{k}) = {}",
                            at[(l, k)]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn transform_is_symmetric() {
        let (_, _, blocked) = blocked_for(9, "example1");
        let at = blocked.a_tilde();
        let asym = (at - at.transpose()).abs().max();
        let scale = at.abs().max();
        assert!(asym <= 1e-10 * scale, "asymmetry {asym} at scale {scale}");
    }

    #[test]
    fn transform_matches_direct_triple_products() {
        // Independent path: entry (l, k) is q_l' (h^2 A) q_k computed with
        // explicitly generated columns and no sine transform.
        let (grid, a, blocked) = blocked_for(9, "example1");
        let m = grid.m();
        let h2 = grid.h() * grid.h();
        let scale = blocked.a_tilde().abs().max();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let k = rng.gen_range(0..grid.n());
            let l = rng.gen_range(0..grid.n());
            let qk = mode_column(grid, k / m + 1, k % m + 1, Normalization::MassOrthonormal)
                .unwrap();
            let ql = mode_column(grid, l / m + 1, l % m + 1, Normalization::MassOrthonormal)
                .unwrap();
            let aqk = a.matvec(&qk);
            let triple: f64 = h2 * ql.iter().zip(&aqk).map(|(x, y)| x * y).sum::<f64>();
            assert!(
                (blocked.a_tilde()[(l, k)] - triple).abs() <= 1e-9 * scale,
                "entry ({l},{k}): {} vs {}",
                blocked.a_tilde()[(l, k)],
                triple
            );
        }
    }

    #[test]
    fn index_sets_partition_the_modes() {
        let (grid, _, blocked) = blocked_for(7, "constant");
        let low = blocked.low_indices(3);
        let high = blocked.high_indices(3);
        assert_eq!(low.len(), 9);
        assert_eq!(low.first(), Some(&0));
        assert_eq!(low.len() + high.len(), grid.n());
        let mut all: Vec<usize> = low.iter().chain(high.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..grid.n()).collect::<Vec<_>>());
    }

    #[test]
    fn constant_coefficient_coupling_vanishes() {
        let (_, _, blocked) = blocked_for(15, "constant");
        for cutoff in [2, 4] {
            let coupling = blocked.coupling_norm(cutoff).unwrap();
            assert!(coupling <= 1e-10, "cutoff {cutoff}: coupling {coupling}");
            let analysis = blocked.exact_schur(cutoff).unwrap();
            assert!(analysis.gap <= 1e-10, "gap {}", analysis.gap);
        }
    }

    #[test]
    fn schur_certificate_holds_for_variable_coefficient() {
        let (_, _, blocked) = blocked_for(15, "example1");
        for cutoff in [2, 4, 6] {
            let analysis = blocked.exact_schur(cutoff).unwrap();
            assert!(analysis.gap > 0.0);
            assert!(analysis.alpha_h > 0.0);
            assert!(
                analysis.certificate_holds(),
                "cutoff {cutoff}: gap {} vs bound {}",
                analysis.gap,
                analysis.bound_rhs
            );
        }
    }

    #[test]
    fn alpha_h_matches_the_tail_eigenvalue_for_constant_kappa() {
        // With kappa = 1 the high-block spectrum is known exactly: its
        // smallest member is the smallest discrete eigenvalue outside the
        // low block, i.e. lambda_{M+1, 1}.
        let (grid, _, blocked) = blocked_for(11, "constant");
        let cutoff = 3;
        let analysis = blocked.exact_schur(cutoff).unwrap();
        let expected = discrete_eigenvalue(grid, cutoff + 1, 1).unwrap();
        assert_relative_eq!(analysis.alpha_h, expected, max_relative = 1e-8);
    }

    #[test]
    fn schur_low_coefficients_match_the_full_solve() {
        let (grid, a, blocked) = blocked_for(15, "example1");
        let problem = manufactured_problem("example1").unwrap();
        let f = assemble_rhs(grid, problem.forcing()).unwrap();
        let cutoff = 4;
        let cmp = blocked.reduced_vs_schur(&a, &f, cutoff).unwrap();
        // Low coefficients of the direct solution in the same basis.
        let direct = solve_direct(&a, &f).unwrap();
        let c = dst2_analyze(grid, &direct.solution).unwrap();
        let low = blocked.low_indices(cutoff);
        let y_scale = cmp.y_low.abs().max();
        for (slot, &flat) in low.iter().enumerate() {
            let y_full = 0.5 * c[flat];
            assert!(
                (cmp.y_low[slot] - y_full).abs() <= 1e-10 * y_scale,
                "slot {slot}: {} vs {}",
                cmp.y_low[slot],
                y_full
            );
        }
        // The Galerkin truncation differs from exact condensation, but only
        // slightly for a smooth problem.
        assert!(cmp.diff_energy > 0.0);
        let u_scale = energy_norm(&a, direct.solution.values()).unwrap();
        assert!(cmp.diff_energy <= 1e-2 * u_scale);
    }

    #[test]
    fn decay_report_rows_and_slope() {
        let (grid, a, _) = blocked_for(15, "example1");
        let report = schur_decay_report(&a, grid, &[2, 4, 6]).unwrap();
        assert_eq!(report.grid_id, "m15");
        assert_eq!(report.rows.len(), 3);
        assert_relative_eq!(
            report.rows[0].lambda_next,
            eigenvalue(3, 3).unwrap(),
            max_relative = 1e-14
        );
        for row in &report.rows {
            assert!(row.alpha_h > 0.0);
            assert!(row.coupling > 0.0);
            assert!(row.gap <= row.bound_rhs + 1e-8);
        }
        // The slope field is exactly the least-squares fit of the rows.
        let xs: Vec<f64> = report.rows.iter().map(|r| r.lambda_next).collect();
        let ys: Vec<f64> = report.rows.iter().map(|r| r.coupling).collect();
        assert_relative_eq!(
            report.fitted_slope,
            fit_loglog_slope(&xs, &ys),
            max_relative = 1e-14
        );
    }

    #[test]
    fn coupling_is_linear_in_the_coefficient_perturbation() {
        // The constant part of kappa never couples low and high modes, so
        // doubling the oscillatory amplitude doubles the coupling block.
        let grid = Grid2D::new(11).unwrap();
        let freq = 2.0 * PI * 2.0;
        let half = assemble_operator(
            grid,
            &move |x: f64, y: f64| 1.0 + 0.25 * (freq * x).sin() * (freq * y).sin(),
            KappaAveraging::Midpoint,
        )
        .unwrap();
        let full = assemble_operator(
            grid,
            &move |x: f64, y: f64| 1.0 + 0.5 * (freq * x).sin() * (freq * y).sin(),
            KappaAveraging::Midpoint,
        )
        .unwrap();
        let b_half = BlockedOperator::transform_full(&half, grid).unwrap();
        let b_full = BlockedOperator::transform_full(&full, grid).unwrap();
        for cutoff in [2, 4] {
            let c_half = b_half.coupling_norm(cutoff).unwrap();
            let c_full = b_full.coupling_norm(cutoff).unwrap();
            assert_relative_eq!(2.0 * c_half, c_full, max_relative = 1e-10);
        }
    }

    #[test]
    fn loglog_fit_recovers_a_known_slope() {
        let x: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(-1.5)).collect();
        assert_relative_eq!(fit_loglog_slope(&x, &y), -1.5, max_relative = 1e-12);
    }

    #[test]
    fn oracle_guards() {
        let grid = Grid2D::new(65).unwrap();
        let a = assemble_operator(grid, &|_x: f64, _y: f64| 1.0, KappaAveraging::Midpoint)
            .unwrap();
        let err = BlockedOperator::transform_full(&a, grid).unwrap_err();
        assert_eq!(err.category(), "feasibility");
        let (_, _, blocked) = blocked_for(7, "constant");
        assert!(blocked.coupling_norm(0).is_err());
        assert!(blocked.coupling_norm(7).is_err());
        assert!(blocked.exact_schur(9).is_err());
    }
}

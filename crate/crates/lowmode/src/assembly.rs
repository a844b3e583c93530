//! Five-point finite-difference assembly of `-div(kappa grad u)` and the
//! manufactured problems used throughout the experiments.
//!
//! The stencil uses edge-centered diffusion coefficients, so the assembled
//! matrix is symmetric by construction: the coupling between two neighboring
//! nodes is read from the same coefficient sample for both rows.

use std::io;

use crate::error::{Error, Result};
use crate::grid::{sample_field, Grid2D, GridFunction, ScalarField};

/// Sparse matrix in compressed sparse row format with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseOperator {
    /// Builds an operator from raw CSR arrays, validating the structure.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != n_rows + 1 {
            return Err(Error::DimensionMismatch {
                expected: n_rows + 1,
                got: row_ptr.len(),
                context: "CSR row pointer length",
            });
        }
        if col_idx.len() != values.len() || row_ptr[n_rows] != col_idx.len() {
            return Err(Error::InvalidArgument(
                "CSR column/value lengths disagree with the row pointer".into(),
            ));
        }
        for r in 0..n_rows {
            if row_ptr[r] > row_ptr[r + 1] {
                return Err(Error::InvalidArgument(format!(
                    "CSR row pointer decreases at row {r}"
                )));
            }
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            for pair in cols.windows(2) {
                if pair[0] >= pair[1] {
                    return Err(Error::InvalidArgument(format!(
                        "CSR columns not strictly increasing in row {r}"
                    )));
                }
            }
            if let Some(&last) = cols.last() {
                if last >= n_cols {
                    return Err(Error::InvalidArgument(format!(
                        "CSR column out of range in row {r}"
                    )));
                }
            }
        }
        Ok(SparseOperator {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    /// `out = A x`.  Panics if the dimensions do not match.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols, "matvec input dimension");
        assert_eq!(out.len(), self.n_rows, "matvec output dimension");
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let mut s = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                s += v * x[c];
            }
            out[r] = s;
        }
    }

    /// Returns `A x` as a fresh vector.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut out);
        out
    }

    /// Quadratic form `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n_cols, "quadratic form dimension");
        assert_eq!(self.n_rows, self.n_cols, "quadratic form needs square A");
        let mut s = 0.0;
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let mut row_dot = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                row_dot += v * x[c];
            }
            s += x[r] * row_dot;
        }
        s
    }

    /// Main diagonal (zero where a row has no diagonal entry).
    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_rows];
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            if let Ok(p) = cols.binary_search(&r) {
                d[r] = vals[p];
            }
        }
        d
    }

    /// Largest `|a_ij - a_ji|` over the whole matrix; 0 for a matrix that is
    /// symmetric down to the last bit.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let mirrored = {
                    let (mc, mv) = self.row(c);
                    match mc.binary_search(&r) {
                        Ok(p) => mv[p],
                        Err(_) => 0.0,
                    }
                };
                worst = worst.max((v - mirrored).abs());
            }
        }
        worst
    }

    /// Writes the operator in Matrix Market coordinate format (symmetric,
    /// lower triangle, 1-based indices).
    pub fn write_matrix_market<W: io::Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
        let lower: usize = (0..self.n_rows)
            .map(|r| self.row(r).0.iter().filter(|&&c| c <= r).count())
            .sum();
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, lower)?;
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if c <= r {
                    writeln!(w, "{} {} {:.16e}", r + 1, c + 1, v)?;
                }
            }
        }
        Ok(())
    }
}

/// `A v` for a grid function living on the grid the operator was built on.
pub fn apply_operator(a: &SparseOperator, v: &GridFunction) -> Result<GridFunction> {
    if a.n_cols() != v.values().len() {
        return Err(Error::DimensionMismatch {
            expected: a.n_cols(),
            got: v.values().len(),
            context: "operator application",
        });
    }
    GridFunction::new(v.grid(), a.matvec(v.values()))
}

/// Residual `f - A u`.
pub fn residual(a: &SparseOperator, u: &GridFunction, f: &GridFunction) -> Result<GridFunction> {
    let au = apply_operator(a, u)?;
    let values = f
        .values()
        .iter()
        .zip(au.values())
        .map(|(fv, av)| fv - av)
        .collect();
    GridFunction::new(u.grid(), values)
}

/// How the diffusion coefficient is sampled on cell edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaAveraging {
    /// Evaluate `kappa` at the edge midpoint (the default).
    Midpoint,
    /// Harmonic mean of the two node values sharing the edge.
    Harmonic,
}

fn edge_value<F: ScalarField + ?Sized>(
    kappa: &F,
    averaging: KappaAveraging,
    xa: f64,
    ya: f64,
    xb: f64,
    yb: f64,
) -> Result<f64> {
    let check = |x: f64, y: f64, v: f64| -> Result<f64> {
        if !v.is_finite() {
            return Err(Error::Evaluation {
                x,
                y,
                detail: format!("coefficient value {v} is not finite"),
            });
        }
        if v <= 0.0 {
            return Err(Error::Ellipticity { x, y, value: v });
        }
        Ok(v)
    };
    match averaging {
        KappaAveraging::Midpoint => {
            let (xm, ym) = (0.5 * (xa + xb), 0.5 * (ya + yb));
            check(xm, ym, kappa.eval(xm, ym))
        }
        KappaAveraging::Harmonic => {
            let a = check(xa, ya, kappa.eval(xa, ya))?;
            let b = check(xb, yb, kappa.eval(xb, yb))?;
            Ok(2.0 * a * b / (a + b))
        }
    }
}

/// Assembles the five-point discretization of `-div(kappa grad u)` with
/// homogeneous Dirichlet boundary conditions.
///
/// Row `(i, j)` reads `h^-2` times: the sum of its four edge coefficients on
/// the diagonal, and minus each interior edge coefficient on the matching
/// off-diagonal.  Neighboring rows reference the same edge sample, so the
/// result is exactly symmetric.
pub fn assemble_operator<F: ScalarField + ?Sized>(
    grid: Grid2D,
    kappa: &F,
    averaging: KappaAveraging,
) -> Result<SparseOperator> {
    let m = grid.m();
    let h = grid.h();
    let inv_h2 = 1.0 / (h * h);

    // kx[(j-1)*(m+1) + e]: edge between nodes (e, j) and (e+1, j), where node
    // index 0 and m+1 denote the boundary layer.  ky mirrors this per column.
    let mut kx = vec![0.0; m * (m + 1)];
    let mut ky = vec![0.0; m * (m + 1)];
    for j in 1..=m {
        for e in 0..=m {
            kx[(j - 1) * (m + 1) + e] = edge_value(
                kappa,
                averaging,
                e as f64 * h,
                j as f64 * h,
                (e + 1) as f64 * h,
                j as f64 * h,
            )?;
        }
    }
    for i in 1..=m {
        for e in 0..=m {
            ky[(i - 1) * (m + 1) + e] = edge_value(
                kappa,
                averaging,
                i as f64 * h,
                e as f64 * h,
                i as f64 * h,
                (e + 1) as f64 * h,
            )?;
        }
    }
    let kx = |e: usize, j: usize| kx[(j - 1) * (m + 1) + e];
    let ky = |i: usize, e: usize| ky[(i - 1) * (m + 1) + e];

    let n = grid.n();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(5 * n);
    let mut values = Vec::with_capacity(5 * n);
    row_ptr.push(0);
    for j in 1..=m {
        for i in 1..=m {
            let r = (j - 1) * m + (i - 1);
            let west = kx(i - 1, j);
            let east = kx(i, j);
            let south = ky(i, j - 1);
            let north = ky(i, j);
            if j > 1 {
                col_idx.push(r - m);
                values.push(-south * inv_h2);
            }
            if i > 1 {
                col_idx.push(r - 1);
                values.push(-west * inv_h2);
            }
            col_idx.push(r);
            values.push((west + east + south + north) * inv_h2);
            if i < m {
                col_idx.push(r + 1);
                values.push(-east * inv_h2);
            }
            if j < m {
                col_idx.push(r + m);
                values.push(-north * inv_h2);
            }
            row_ptr.push(col_idx.len());
        }
    }
    SparseOperator::from_csr(n, n, row_ptr, col_idx, values)
}

/// Samples the forcing term at the interior nodes.
pub fn assemble_rhs<F: ScalarField + ?Sized>(grid: Grid2D, f: &F) -> Result<GridFunction> {
    sample_field(grid, f)
}

type BoxedField = Box<dyn ScalarField + Send + Sync>;

/// A manufactured test problem: coefficient, forcing, and the solution the
/// forcing was derived from.
pub struct Problem {
    name: &'static str,
    kappa: BoxedField,
    forcing: BoxedField,
    exact: BoxedField,
    kappa_bounds: (f64, f64),
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("kappa_bounds", &self.kappa_bounds)
            .finish_non_exhaustive()
    }
}

impl Problem {
    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn kappa(&self) -> &(dyn ScalarField + Send + Sync) {
        self.kappa.as_ref()
    }

    pub fn forcing(&self) -> &(dyn ScalarField + Send + Sync) {
        self.forcing.as_ref()
    }

    /// The exact solution `u(x, y) = sin(pi x) sin(pi y)`.
    pub fn exact_solution(&self) -> &(dyn ScalarField + Send + Sync) {
        self.exact.as_ref()
    }

    /// Analytic bounds `(min, max)` of the coefficient over the square.
    pub fn kappa_bounds(&self) -> (f64, f64) {
        self.kappa_bounds
    }
}

/// Builds the problem for `kappa = 1 + amp * sin(freq x) sin(freq y)` with the
/// exact solution `u = sin(pi x) sin(pi y)`; the forcing comes from expanding
/// `-div(kappa grad u) = -kappa lap(u) - grad(kappa).grad(u)`.
fn oscillatory_problem(name: &'static str, amp: f64, freq: f64) -> Problem {
    use std::f64::consts::PI;
    let kappa = move |x: f64, y: f64| 1.0 + amp * (freq * x).sin() * (freq * y).sin();
    let forcing = move |x: f64, y: f64| {
        let u = (PI * x).sin() * (PI * y).sin();
        let ux = PI * (PI * x).cos() * (PI * y).sin();
        let uy = PI * (PI * x).sin() * (PI * y).cos();
        let k = kappa(x, y);
        let kx = amp * freq * (freq * x).cos() * (freq * y).sin();
        let ky = amp * freq * (freq * x).sin() * (freq * y).cos();
        2.0 * PI * PI * k * u - kx * ux - ky * uy
    };
    Problem {
        name,
        kappa: Box::new(kappa),
        forcing: Box::new(forcing),
        exact: Box::new(|x: f64, y: f64| (PI * x).sin() * (PI * y).sin()),
        kappa_bounds: (1.0 - amp, 1.0 + amp),
    }
}

/// Returns one of the built-in manufactured problems.
///
/// * `example1`: smooth coefficient `1 + 0.5 sin(2 pi x) sin(2 pi y)`.
/// * `example2`: rough coefficient `1 + 0.9 sin(8 pi x) sin(8 pi y)`.
/// * `constant`: `kappa = 1`, retained because several baselines are
///   calibrated against the constant-coefficient Laplacian.
///
/// All three share the exact solution `sin(pi x) sin(pi y)`.
pub fn manufactured_problem(name: &str) -> Result<Problem> {
    use std::f64::consts::PI;
    match name {
        "example1" => Ok(oscillatory_problem("example1", 0.5, 2.0 * PI)),
        "example2" => Ok(oscillatory_problem("example2", 0.9, 8.0 * PI)),
        "constant" => Ok(oscillatory_problem("constant", 0.0, 2.0 * PI)),
        other => Err(Error::InvalidArgument(format!(
            "unknown problem '{other}'; expected example1, example2, or constant"
        ))),
    }
}

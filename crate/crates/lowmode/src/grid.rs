//! Uniform grid on the open unit square, grid functions, and discrete norms.
//!
//! The discretization keeps `m` interior points per axis with spacing
//! `h = 1/(m + 1)`; boundary nodes are never stored because the Dirichlet
//! data is identically zero.  Interior nodes are addressed either by the
//! 1-based pair `(i, j)` or by a flat index in which `i` runs fastest.

use crate::error::{Error, Result};

/// Uniform Cartesian grid over the interior of the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid2D {
    m: usize,
}

impl Grid2D {
    /// Creates the grid with `m >= 1` interior points per axis.
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument(
                "grid needs at least one interior point per axis".into(),
            ));
        }
        Ok(Grid2D { m })
    }

    /// Interior points per axis.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Mesh width `h = 1/(m + 1)`.
    pub fn h(&self) -> f64 {
        1.0 / (self.m as f64 + 1.0)
    }

    /// Total number of unknowns `N = m * m`.
    pub fn n(&self) -> usize {
        self.m * self.m
    }

    /// Flat index of interior node `(i, j)`, both 1-based, `i` fastest.
    pub fn node_index(&self, i: usize, j: usize) -> Result<usize> {
        if i == 0 || j == 0 || i > self.m || j > self.m {
            return Err(Error::InvalidArgument(format!(
                "node ({i}, {j}) outside 1..={}",
                self.m
            )));
        }
        Ok((j - 1) * self.m + (i - 1))
    }

    /// Inverse of [`node_index`](Self::node_index).
    pub fn node_of_index(&self, k: usize) -> (usize, usize) {
        debug_assert!(k < self.n());
        (k % self.m + 1, k / self.m + 1)
    }

    /// Physical coordinates of interior node `(i, j)`.
    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        let h = self.h();
        (i as f64 * h, j as f64 * h)
    }
}

/// Scalar coefficient or forcing field on the closed unit square.
///
/// Implemented for every `Fn(f64, f64) -> f64`, so plain closures can be
/// passed wherever a field is expected.
pub trait ScalarField {
    fn eval(&self, x: f64, y: f64) -> f64;
}

impl<F: Fn(f64, f64) -> f64> ScalarField for F {
    fn eval(&self, x: f64, y: f64) -> f64 {
        self(x, y)
    }
}

/// Values of a scalar function at the interior nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid2D,
    values: Vec<f64>,
}

impl GridFunction {
    /// Wraps a value vector; its length must equal `grid.n()`.
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::DimensionMismatch {
                expected: grid.n(),
                got: values.len(),
                context: "grid function values",
            });
        }
        Ok(GridFunction { grid, values })
    }

    /// The zero function on `grid`.
    pub fn zeros(grid: Grid2D) -> Self {
        GridFunction {
            grid,
            values: vec![0.0; grid.n()],
        }
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Mesh-weighted l2 norm; see [`discrete_l2_norm`].
    pub fn l2_norm(&self) -> f64 {
        discrete_l2_norm(self.grid, &self.values)
    }

    /// Discrete H1 seminorm; see [`discrete_h1_seminorm`].
    pub fn h1_seminorm(&self) -> f64 {
        discrete_h1_seminorm(self.grid, &self.values)
    }

    /// Maximum absolute nodal value.
    pub fn max_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Samples `field` at every interior node.
///
/// Fails if the field produces a non-finite value anywhere on the grid.
pub fn sample_field<F: ScalarField + ?Sized>(grid: Grid2D, field: &F) -> Result<GridFunction> {
    let mut values = vec![0.0; grid.n()];
    for j in 1..=grid.m() {
        for i in 1..=grid.m() {
            let (x, y) = grid.coords(i, j);
            let v = field.eval(x, y);
            if !v.is_finite() {
                return Err(Error::Evaluation {
                    x,
                    y,
                    detail: format!("value {v} is not finite"),
                });
            }
            values[(j - 1) * grid.m() + (i - 1)] = v;
        }
    }
    GridFunction::new(grid, values)
}

/// Pairwise (cascade) summation of `f(0) + f(1) + ... + f(n-1)`.
///
/// The reduction tree depends only on `n`, so results are bit-reproducible
/// for a fixed term order regardless of optimization level or thread count.
pub(crate) fn pairwise_sum(n: usize, f: &impl Fn(usize) -> f64) -> f64 {
    fn go(lo: usize, hi: usize, f: &impl Fn(usize) -> f64) -> f64 {
        if hi - lo <= 64 {
            let mut s = 0.0;
            for k in lo..hi {
                s += f(k);
            }
            s
        } else {
            let mid = lo + (hi - lo) / 2;
            go(lo, mid, f) + go(mid, hi, f)
        }
    }
    if n == 0 {
        0.0
    } else {
        go(0, n, f)
    }
}

/// Mesh-weighted l2 norm `h * ||v||_2 = sqrt(h^2 * sum v_ij^2)`.
///
/// This is the discrete analogue of the L2(0,1)^2 norm: for a sampled
/// continuous function it converges to the integral norm at second order.
pub fn discrete_l2_norm(grid: Grid2D, v: &[f64]) -> f64 {
    assert_eq!(v.len(), grid.n(), "value vector does not match grid");
    grid.h() * pairwise_sum(v.len(), &|k| v[k] * v[k]).sqrt()
}

/// Discrete H1 seminorm built from forward differences.
///
/// Every edge of the grid contributes `(dv/h)^2 * h^2 = dv^2`, including the
/// edges that connect interior nodes to the (zero) boundary layer, so the
/// seminorm of a nonzero function is always positive.
pub fn discrete_h1_seminorm(grid: Grid2D, v: &[f64]) -> f64 {
    assert_eq!(v.len(), grid.n(), "value vector does not match grid");
    let m = grid.m();
    // Horizontal edges: for each row j there are m + 1 edges between the
    // padded sequence 0, v_1j, ..., v_mj, 0.  Vertical edges mirror this per
    // column.  Edges are enumerated in a fixed order for reproducibility.
    let edges_per_line = m + 1;
    let horizontal = pairwise_sum(m * edges_per_line, &|e| {
        let j = e / edges_per_line + 1;
        let i = e % edges_per_line; // edge between nodes i and i+1 (0 = boundary)
        let left = if i == 0 { 0.0 } else { v[(j - 1) * m + (i - 1)] };
        let right = if i == m { 0.0 } else { v[(j - 1) * m + i] };
        let d = right - left;
        d * d
    });
    let vertical = pairwise_sum(m * edges_per_line, &|e| {
        let i = e / edges_per_line + 1;
        let j = e % edges_per_line;
        let lower = if j == 0 { 0.0 } else { v[(j - 1) * m + (i - 1)] };
        let upper = if j == m { 0.0 } else { v[j * m + (i - 1)] };
        let d = upper - lower;
        d * d
    });
    (horizontal + vertical).sqrt()
}

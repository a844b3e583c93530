//! Sine eigenmodes of the Dirichlet Laplacian, the low-mode basis built from
//! them, fast two-dimensional sine transforms, and the spectral tail weights
//! that control the truncation error of the reduction.
//!
//! On the grid, mode `(p, q)` is the sampled product `sin(p pi x) sin(q pi y)`.
//! These vectors are exact eigenvectors of the constant-coefficient five-point
//! operator and stay a convenient orthogonal family when the coefficient
//! varies.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid2D, GridFunction};

/// Continuum Dirichlet eigenvalue `pi^2 (p^2 + q^2)` of mode `(p, q)`.
pub fn eigenvalue(p: usize, q: usize) -> Result<f64> {
    if p == 0 || q == 0 {
        return Err(Error::InvalidArgument(
            "mode numbers start at 1".into(),
        ));
    }
    let (p, q) = (p as f64, q as f64);
    Ok(std::f64::consts::PI.powi(2) * (p * p + q * q))
}

/// Eigenvalue of mode `(p, q)` for the discrete constant-coefficient
/// operator: `4 h^-2 (sin^2(p pi h / 2) + sin^2(q pi h / 2))`.
pub fn discrete_eigenvalue(grid: Grid2D, p: usize, q: usize) -> Result<f64> {
    if p == 0 || q == 0 {
        return Err(Error::InvalidArgument(
            "mode numbers start at 1".into(),
        ));
    }
    if p > grid.m() || q > grid.m() {
        return Err(Error::Nyquist {
            cutoff: p.max(q),
            m: grid.m(),
        });
    }
    let h = grid.h();
    let sp = (p as f64 * std::f64::consts::PI * h / 2.0).sin();
    let sq = (q as f64 * std::f64::consts::PI * h / 2.0).sin();
    Ok(4.0 / (h * h) * (sp * sp + sq * sq))
}

/// Column scaling of the basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Plain samples of `sin(p pi x) sin(q pi y)`; squared column norm
    /// `((m + 1) / 2)^2`.
    Raw,
    /// Orthonormal against the lumped mass matrix `h^2 I`; this multiplies
    /// the raw samples by exactly 2, making the Euclidean column norm `1/h`.
    MassOrthonormal,
}

impl Normalization {
    /// Factor applied to the raw samples.
    pub fn scale(self) -> f64 {
        match self {
            Normalization::Raw => 1.0,
            Normalization::MassOrthonormal => 2.0,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Normalization::Raw => "raw",
            Normalization::MassOrthonormal => "massortho",
        }
    }
}

/// One sampled mode as a vector in node order, without building a basis.
pub fn mode_column(grid: Grid2D, p: usize, q: usize, normalization: Normalization) -> Result<Vec<f64>> {
    if p == 0 || q == 0 || p > grid.m() || q > grid.m() {
        return Err(Error::Nyquist {
            cutoff: p.max(q),
            m: grid.m(),
        });
    }
    let m = grid.m();
    let h = grid.h();
    let scale = normalization.scale();
    let pi = std::f64::consts::PI;
    let sp: Vec<f64> = (1..=m).map(|i| (p as f64 * pi * i as f64 * h).sin()).collect();
    let sq: Vec<f64> = (1..=m).map(|j| (q as f64 * pi * j as f64 * h).sin()).collect();
    let mut v = vec![0.0; grid.n()];
    for j in 0..m {
        let row = scale * sq[j];
        for i in 0..m {
            v[j * m + i] = row * sp[i];
        }
    }
    Ok(v)
}

/// Dense column store of all modes `(p, q)` with `p, q <= cutoff`.
///
/// Columns are ordered `(p - 1) * cutoff + (q - 1)` and stored contiguously,
/// which is what the projection kernels stream over.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    grid: Grid2D,
    cutoff: usize,
    normalization: Normalization,
    /// Column-major `N x K` storage.
    data: Vec<f64>,
}

impl SpectralBasis {
    /// Samples and scales every mode up to `cutoff` per axis.
    ///
    /// Fails when `cutoff` is zero or exceeds `m` (modes beyond the grid
    /// Nyquist limit alias onto lower ones and are not representable).
    pub fn build(grid: Grid2D, cutoff: usize, normalization: Normalization) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::InvalidArgument(
                "mode cutoff must be at least 1".into(),
            ));
        }
        if cutoff > grid.m() {
            return Err(Error::Nyquist {
                cutoff,
                m: grid.m(),
            });
        }
        let m = grid.m();
        let n = grid.n();
        let k = cutoff * cutoff;
        let h = grid.h();
        let pi = std::f64::consts::PI;
        // Shared sine table: table[(p-1) * m + (i-1)] = sin(p pi i h).
        let mut table = vec![0.0; cutoff * m];
        for p in 1..=cutoff {
            for i in 1..=m {
                table[(p - 1) * m + (i - 1)] = (p as f64 * pi * i as f64 * h).sin();
            }
        }
        let scale = normalization.scale();
        let mut data = vec![0.0; n * k];
        data.par_chunks_mut(n).enumerate().for_each(|(col, chunk)| {
            let p = col / cutoff + 1;
            let q = col % cutoff + 1;
            let sp = &table[(p - 1) * m..p * m];
            let sq = &table[(q - 1) * m..q * m];
            for j in 0..m {
                let row = scale * sq[j];
                for i in 0..m {
                    chunk[j * m + i] = row * sp[i];
                }
            }
        });
        Ok(SpectralBasis {
            grid,
            cutoff,
            normalization,
            data,
        })
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    /// Per-axis mode cutoff `M`.
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Number of columns `K = M^2`.
    pub fn k(&self) -> usize {
        self.cutoff * self.cutoff
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Mode pair of column `col`.
    pub fn mode_of_column(&self, col: usize) -> (usize, usize) {
        debug_assert!(col < self.k());
        (col / self.cutoff + 1, col % self.cutoff + 1)
    }

    /// Column `col` as a node-ordered slice.
    pub fn column(&self, col: usize) -> &[f64] {
        let n = self.grid.n();
        &self.data[col * n..(col + 1) * n]
    }

    /// The whole column-major store, for kernels that stream all columns.
    pub fn columns_flat(&self) -> &[f64] {
        &self.data
    }

    /// Identifier like `m255-M8-massortho`, used in reports.
    pub fn id(&self) -> String {
        format!(
            "m{}-M{}-{}",
            self.grid.m(),
            self.cutoff,
            self.normalization.label()
        )
    }
}

/// Builds the basis through the lumped-mass projection surrogate instead of
/// nodal interpolation: each column solves `M c = <phi, e_k>_M` with the
/// diagonal mass matrix `M = h^2 I` before normalization is applied.
///
/// Because the mass matrix is diagonal, this route coincides with
/// [`SpectralBasis::build`] up to rounding; the conditioning experiment runs
/// both and checks the agreement.
pub fn build_via_mass_projection(
    grid: Grid2D,
    cutoff: usize,
    normalization: Normalization,
) -> Result<SpectralBasis> {
    let mut basis = SpectralBasis::build(grid, cutoff, Normalization::Raw)?;
    let h2 = grid.h() * grid.h();
    let scale = normalization.scale();
    for v in basis.data.iter_mut() {
        // Literal mass-weighted moment followed by the diagonal mass solve.
        *v = scale * ((*v * h2) / h2);
    }
    basis.normalization = normalization;
    Ok(basis)
}

fn sine_table(m: usize, h: f64) -> Vec<f64> {
    let pi = std::f64::consts::PI;
    let mut table = vec![0.0; m * m];
    for p in 1..=m {
        for i in 1..=m {
            table[(p - 1) * m + (i - 1)] = (p as f64 * pi * i as f64 * h).sin();
        }
    }
    table
}

/// Forward two-dimensional sine analysis: returns the raw-mode coefficients
/// `c[(p-1) m + (q-1)]` with `v = sum c_pq sin(p pi x) sin(q pi y)` at the
/// nodes.  Separable evaluation costs `O(m^3)` instead of the naive `O(m^4)`.
pub fn dst2_analyze(grid: Grid2D, v: &GridFunction) -> Result<Vec<f64>> {
    if v.grid() != grid {
        return Err(Error::DimensionMismatch {
            expected: grid.n(),
            got: v.grid().n(),
            context: "sine analysis input grid",
        });
    }
    let m = grid.m();
    let table = sine_table(m, grid.h());
    let vals = v.values();
    // Stage 1: contract over i.  w[(p-1) m + (j-1)] = sum_i s_p(i) v(i, j).
    let mut w = vec![0.0; m * m];
    for p in 0..m {
        let sp = &table[p * m..(p + 1) * m];
        for j in 0..m {
            let line = &vals[j * m..(j + 1) * m];
            let mut s = 0.0;
            for (a, b) in sp.iter().zip(line) {
                s += a * b;
            }
            w[p * m + j] = s;
        }
    }
    // Stage 2: contract over j with the analysis weight (2 / (m + 1))^2.
    let weight = (2.0 / (m as f64 + 1.0)).powi(2);
    let mut c = vec![0.0; m * m];
    for p in 0..m {
        let wrow = &w[p * m..(p + 1) * m];
        for q in 0..m {
            let sq = &table[q * m..(q + 1) * m];
            let mut s = 0.0;
            for (a, b) in sq.iter().zip(wrow) {
                s += a * b;
            }
            c[p * m + q] = weight * s;
        }
    }
    Ok(c)
}

/// Inverse of [`dst2_analyze`]: evaluates `sum c_pq sin(p pi x) sin(q pi y)`
/// at the interior nodes.
pub fn dst2_synthesize(grid: Grid2D, coeffs: &[f64]) -> Result<GridFunction> {
    let m = grid.m();
    if coeffs.len() != m * m {
        return Err(Error::DimensionMismatch {
            expected: m * m,
            got: coeffs.len(),
            context: "sine synthesis coefficients",
        });
    }
    let table = sine_table(m, grid.h());
    // Stage 1: contract over q.  The sine table is symmetric in its two
    // indices (s_q(j) = s_j(q)), so row j of the table gives a contiguous
    // run over q.  t[(p-1) m + (j-1)] = sum_q c_pq s_q(j).
    let mut t = vec![0.0; m * m];
    for p in 0..m {
        let crow = &coeffs[p * m..(p + 1) * m];
        for j in 0..m {
            let sj = &table[j * m..(j + 1) * m];
            let mut s = 0.0;
            for (a, b) in sj.iter().zip(crow) {
                s += a * b;
            }
            t[p * m + j] = s;
        }
    }
    // Stage 2: accumulate over p into the node lines, fixed p order.
    let mut vals = vec![0.0; grid.n()];
    for p in 0..m {
        let sp = &table[p * m..(p + 1) * m];
        for j in 0..m {
            let tv = t[p * m + j];
            if tv == 0.0 {
                continue;
            }
            let line = &mut vals[j * m..(j + 1) * m];
            for (out, s) in line.iter_mut().zip(sp) {
                *out += tv * s;
            }
        }
    }
    GridFunction::new(grid, vals)
}

/// Discrete H1 seminorm of the component of `v` outside the low block
/// `{(p, q) : p <= cutoff and q <= cutoff}`.
///
/// This is the best-approximation error (in the constant-coefficient energy)
/// against the span of the retained modes, computed by zeroing the low block
/// of the sine coefficients and re-synthesizing the remainder.
pub fn projection_error_h1(grid: Grid2D, v: &GridFunction, cutoff: usize) -> Result<f64> {
    if cutoff > grid.m() {
        return Err(Error::Nyquist {
            cutoff,
            m: grid.m(),
        });
    }
    let m = grid.m();
    let mut c = dst2_analyze(grid, v)?;
    for p in 0..cutoff {
        for q in 0..cutoff {
            c[p * m + q] = 0.0;
        }
    }
    Ok(dst2_synthesize(grid, &c)?.h1_seminorm())
}

/// Continuum tail weight `W_M = sum 1 / (pi^4 (a^2 + b^2)^2)` over all mode
/// pairs with `a > M` or `b > M`, truncated to the box `[1, radius]^2`.
///
/// The sum is accumulated with Kahan compensation; the neglected remainder
/// beyond the box is `O(radius^-2)`.  `radius` must be at least
/// `4 * max(cutoff, 1)` so the truncation cannot bias the tail comparison.
pub fn tail_weight(cutoff: usize, radius: usize) -> Result<f64> {
    if radius < 4 * cutoff.max(1) {
        return Err(Error::InvalidArgument(format!(
            "radius {radius} too small for cutoff {cutoff}; need at least {}",
            4 * cutoff.max(1)
        )));
    }
    // Kahan-compensated sum of 1 / (a^2 + b^2)^2 in row-major order.
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for a in 1..=radius {
        let a2 = (a * a) as f64;
        for b in 1..=radius {
            if a <= cutoff && b <= cutoff {
                continue;
            }
            let s = a2 + (b * b) as f64;
            let term = 1.0 / (s * s);
            let y = term - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
    }
    Ok(sum / std::f64::consts::PI.powi(4))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{discrete_l2_norm, sample_field};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn continuum_eigenvalues() {
        assert_relative_eq!(eigenvalue(1, 1).unwrap(), 2.0 * PI * PI);
        assert_relative_eq!(eigenvalue(3, 4).unwrap(), 246.74011002723395, max_relative = 1e-15);
        assert!(eigenvalue(0, 1).is_err());
    }

    #[test]
    fn discrete_eigenvalue_worked_example() {
        // m = 15: 8 h^-2 sin^2(pi h / 2) = 2048 sin^2(pi / 32).
        let grid = Grid2D::new(15).unwrap();
        let lambda = discrete_eigenvalue(grid, 1, 1).unwrap();
        assert_relative_eq!(lambda, 19.67587286709202, max_relative = 1e-13);
        // The discrete value sits below the continuum one and approaches it.
        assert!(lambda < eigenvalue(1, 1).unwrap());
        let fine = Grid2D::new(255).unwrap();
        assert_relative_eq!(
            discrete_eigenvalue(fine, 1, 1).unwrap(),
            eigenvalue(1, 1).unwrap(),
            max_relative = 1e-4
        );
    }

    #[test]
    fn basis_shape_and_column_order() {
        let grid = Grid2D::new(15).unwrap();
        let basis = SpectralBasis::build(grid, 8, Normalization::Raw).unwrap();
        assert_eq!(basis.k(), 64);
        assert_eq!(basis.mode_of_column(0), (1, 1));
        assert_eq!(basis.mode_of_column(10), (2, 3));
        assert_eq!(basis.mode_of_column(63), (8, 8));
        // Columns agree with the standalone sampler.
        let col = mode_column(grid, 2, 3, Normalization::Raw).unwrap();
        assert_eq!(basis.column(10), &col[..]);
    }

    #[test]
    fn cutoff_validation() {
        let grid = Grid2D::new(7).unwrap();
        assert!(SpectralBasis::build(grid, 0, Normalization::Raw).is_err());
        assert!(SpectralBasis::build(grid, 7, Normalization::Raw).is_ok());
        let err = SpectralBasis::build(grid, 8, Normalization::Raw).unwrap_err();
        assert_eq!(err.category(), "nyquist");
    }

    #[test]
    fn raw_columns_are_orthogonal_with_known_norm() {
        // B'B = ((m + 1) / 2)^2 I, checked over every column pair.
        for m in [1, 2, 3, 4, 5, 6, 7, 8, 15] {
            let grid = Grid2D::new(m).unwrap();
            let basis = SpectralBasis::build(grid, m, Normalization::Raw).unwrap();
            let expected = ((m as f64 + 1.0) / 2.0).powi(2);
            for a in 0..basis.k() {
                for b in a..basis.k() {
                    let dot: f64 = basis
                        .column(a)
                        .iter()
                        .zip(basis.column(b))
                        .map(|(x, y)| x * y)
                        .sum();
                    let target = if a == b { expected } else { 0.0 };
                    assert!(
                        (dot - target).abs() <= 1e-10 * expected,
                        "m {m}: columns {a},{b} dot {dot} vs {target}"
                    );
                }
            }
        }
    }

    #[test]
    fn orthogonality_spot_checks_on_a_large_grid() {
        let grid = Grid2D::new(511).unwrap();
        let expected = (512.0f64 / 2.0).powi(2);
        let mut rng = ChaCha8Rng::seed_from_u64(511);
        for _ in 0..40 {
            let (p1, q1) = (rng.gen_range(1..=511), rng.gen_range(1..=511));
            let (p2, q2) = (rng.gen_range(1..=511), rng.gen_range(1..=511));
            let c1 = mode_column(grid, p1, q1, Normalization::Raw).unwrap();
            let c2 = mode_column(grid, p2, q2, Normalization::Raw).unwrap();
            let dot: f64 = c1.iter().zip(&c2).map(|(x, y)| x * y).sum();
            let target = if (p1, q1) == (p2, q2) { expected } else { 0.0 };
            assert!(
                (dot - target).abs() <= 1e-9 * expected,
                "modes ({p1},{q1})x({p2},{q2}): {dot} vs {target}"
            );
        }
    }

    #[test]
    fn mass_orthonormal_scaling() {
        let grid = Grid2D::new(15).unwrap();
        let raw = SpectralBasis::build(grid, 6, Normalization::Raw).unwrap();
        let mass = SpectralBasis::build(grid, 6, Normalization::MassOrthonormal).unwrap();
        // Exactly twice the raw samples.
        for col in 0..raw.k() {
            for (r, m_) in raw.column(col).iter().zip(mass.column(col)) {
                assert_eq!(*m_, 2.0 * *r);
            }
        }
        // B' (h^2 I) B = I.
        let h2 = grid.h() * grid.h();
        for a in 0..mass.k() {
            for b in a..mass.k() {
                let dot: f64 = mass
                    .column(a)
                    .iter()
                    .zip(mass.column(b))
                    .map(|(x, y)| x * y)
                    .sum();
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((h2 * dot - target).abs() <= 1e-12);
            }
        }
        // Euclidean column norm 1 / h.
        let norm: f64 = mass.column(0).iter().map(|x| x * x).sum::<f64>().sqrt();
        assert_relative_eq!(norm, 16.0, max_relative = 1e-13);
    }

    #[test]
    fn mass_projection_route_matches_interpolation() {
        let grid = Grid2D::new(31).unwrap();
        let interp = SpectralBasis::build(grid, 5, Normalization::MassOrthonormal).unwrap();
        let proj = build_via_mass_projection(grid, 5, Normalization::MassOrthonormal).unwrap();
        assert_eq!(proj.id(), interp.id());
        let mut worst = 0.0f64;
        for (a, b) in interp.columns_flat().iter().zip(proj.columns_flat()) {
            worst = worst.max((a - b).abs());
        }
        assert!(worst <= 1e-12, "routes differ by {worst}");
    }

    #[test]
    fn dst_round_trip_and_one_hot_analysis() {
        let grid = Grid2D::new(16).unwrap();
        let m = grid.m();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coeffs: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = dst2_synthesize(grid, &coeffs).unwrap();
        let back = dst2_analyze(grid, &v).unwrap();
        for (orig, rec) in coeffs.iter().zip(&back) {
            assert_relative_eq!(*orig, *rec, max_relative = 1e-11, epsilon = 1e-12);
        }
        // A sampled pure mode analyzes to a one-hot coefficient vector.
        let mode = sample_field(grid, &|x: f64, y: f64| {
            (3.0 * PI * x).sin() * (2.0 * PI * y).sin()
        })
        .unwrap();
        let c = dst2_analyze(grid, &mode).unwrap();
        for p in 0..m {
            for q in 0..m {
                let target = if (p, q) == (2, 1) { 1.0 } else { 0.0 };
                assert!(
                    (c[p * m + q] - target).abs() <= 1e-12,
                    "coefficient ({p},{q}) = {}",
                    c[p * m + q]
                );
            }
        }
    }

    #[test]
    fn analysis_satisfies_parseval() {
        // l2 norm squared equals sum of squared raw coefficients over 4.
        let grid = Grid2D::new(12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vals: Vec<f64> = (0..grid.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = GridFunction::new(grid, vals.clone()).unwrap();
        let c = dst2_analyze(grid, &v).unwrap();
        let coeff_energy: f64 = c.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert_relative_eq!(
            discrete_l2_norm(grid, &vals).powi(2),
            coeff_energy,
            max_relative = 1e-12
        );
    }

    #[test]
    fn projection_error_vanishes_on_retained_modes() {
        let grid = Grid2D::new(24).unwrap();
        let v = GridFunction::new(grid, mode_column(grid, 3, 4, Normalization::Raw).unwrap())
            .unwrap();
        let err = projection_error_h1(grid, &v, 4).unwrap();
        assert!(err <= 1e-10 * v.h1_seminorm());
        // Full cutoff leaves no tail at all.
        let full = projection_error_h1(grid, &v, grid.m()).unwrap();
        assert!(full <= 1e-10 * v.h1_seminorm());
    }

    #[test]
    fn projection_error_of_a_pure_tail_mode_is_its_seminorm() {
        let grid = Grid2D::new(24).unwrap();
        let cutoff = 5;
        let v = GridFunction::new(
            grid,
            mode_column(grid, cutoff + 1, 1, Normalization::Raw).unwrap(),
        )
        .unwrap();
        let err = projection_error_h1(grid, &v, cutoff).unwrap();
        assert_relative_eq!(err, v.h1_seminorm(), max_relative = 1e-10);
    }

    #[test]
    fn projection_error_matches_modewise_accounting() {
        // Independent path: with A-Delta-orthogonal modes the tail energy is
        // the sum of per-mode energies, each known in closed form.
        let grid = Grid2D::new(20).unwrap();
        let m = grid.m();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let coeffs: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = dst2_synthesize(grid, &coeffs).unwrap();
        let cutoff = 6;
        let err = projection_error_h1(grid, &v, cutoff).unwrap();
        let h = grid.h();
        let mut tail_sq = 0.0;
        for p in 1..=m {
            for q in 1..=m {
                if p <= cutoff && q <= cutoff {
                    continue;
                }
                let c = coeffs[(p - 1) * m + (q - 1)];
                let lambda = discrete_eigenvalue(grid, p, q).unwrap();
                // |phi|_H1^2 = h^2 lambda_h ||phi||_2^2 = lambda_h (m+1)^2 h^2 / 4.
                let col_sq = ((m as f64 + 1.0) / 2.0).powi(2);
                tail_sq += c * c * lambda * col_sq * h * h;
            }
        }
        assert_relative_eq!(err, tail_sq.sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn tail_weight_basics() {
        // Removing the single mode (1, 1) subtracts exactly 1 / (4 pi^4).
        let w0 = tail_weight(0, 400).unwrap();
        let w1 = tail_weight(1, 400).unwrap();
        assert_relative_eq!(w0 - w1, 0.0025664955636710844, max_relative = 1e-11);
        // Monotone decrease with the cutoff.
        let w2 = tail_weight(2, 400).unwrap();
        let w4 = tail_weight(4, 400).unwrap();
        let w8 = tail_weight(8, 400).unwrap();
        assert!(w1 > w2 && w2 > w4 && w4 > w8);
        // Radius validation.
        assert!(tail_weight(8, 31).is_err());
        assert!(tail_weight(0, 3).is_err());
    }

    #[test]
    fn tail_weight_is_stable_under_summation_order_and_radius() {
        // Diagonal-order Kahan summation of the same term set.
        fn diagonal(cutoff: usize, radius: usize) -> f64 {
            let mut sum = 0.0f64;
            let mut comp = 0.0f64;
            for s in 2..=(2 * radius) {
                for a in s.saturating_sub(radius).max(1)..=(s - 1).min(radius) {
                    let b = s - a;
                    if a <= cutoff && b <= cutoff {
                        continue;
                    }
                    let d = ((a * a) + (b * b)) as f64;
                    let term = 1.0 / (d * d);
                    let y = term - comp;
                    let t = sum + y;
                    comp = (t - sum) - y;
                    sum = t;
                }
            }
            sum / std::f64::consts::PI.powi(4)
        }
        for cutoff in [0, 3, 8] {
            let row = tail_weight(cutoff, 500).unwrap();
            let diag = diagonal(cutoff, 500);
            assert_relative_eq!(row, diag, max_relative = 1e-13);
        }
        // Doubling the radius moves the value by only O(radius^-2).
        let w = tail_weight(4, 600).unwrap();
        let w2 = tail_weight(4, 1200).unwrap();
        assert!((w - w2).abs() <= 5.0 / (600.0 * 600.0));
    }

    #[test]
    fn surrogate_decay_rate_of_projection_error() {
        // Coefficients lambda_pq^(-3/2) mimic the regularity the truncation
        // analysis assumes; the H1 tail error times M / sqrt(log M) must stay
        // bounded as the cutoff grows.
        let grid = Grid2D::new(32).unwrap();
        let m = grid.m();
        let mut coeffs = vec![0.0; m * m];
        for p in 1..=m {
            for q in 1..=m {
                coeffs[(p - 1) * m + (q - 1)] = eigenvalue(p, q).unwrap().powf(-1.5);
            }
        }
        let v = dst2_synthesize(grid, &coeffs).unwrap();
        let mut scaled = Vec::new();
        for cutoff in [2usize, 4, 8, 16] {
            let err = projection_error_h1(grid, &v, cutoff).unwrap();
            scaled.push(err * cutoff as f64 / (cutoff as f64).ln().sqrt());
        }
        let first = scaled[0];
        for s in &scaled {
            assert!(*s <= 1.5 * first, "scaled errors {scaled:?} not bounded");
        }
    }
}

//! Error type shared by every module of the crate.

use std::fmt;

use crate::solvers::SolveReport;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
///
/// Variants are grouped by category so that front-ends can map them onto
/// process exit codes without matching on every variant.
#[derive(Debug)]
pub enum Error {
    /// A caller-supplied argument violated a documented precondition.
    InvalidArgument(String),
    /// A coefficient or forcing field returned a non-finite value.
    Evaluation {
        x: f64,
        y: f64,
        detail: String,
    },
    /// The diffusion coefficient failed the ellipticity requirement
    /// `kappa > 0` at a sampled point.
    Ellipticity {
        x: f64,
        y: f64,
        value: f64,
    },
    /// A spectral cutoff exceeded what the grid can represent.
    Nyquist {
        cutoff: usize,
        m: usize,
    },
    /// Two objects that must live on the same grid (or share a dimension)
    /// did not.
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },
    /// A matrix that must be symmetric positive definite was not.
    Definiteness(String),
    /// An iterative solver exhausted its iteration budget.  The report of the
    /// failed run is kept so callers can inspect the residual history.
    Convergence(Box<SolveReport>),
    /// The grid does not meet a structural requirement of the algorithm
    /// (e.g. the multigrid hierarchy needs `m = 2^l - 1`).
    GridIncompatible(String),
    /// The request is structurally valid but too large for the brute-force
    /// path it was sent down.
    Feasibility(String),
}

impl Error {
    /// Coarse category label, stable across variants, used by front-ends to
    /// choose exit codes and by tests to assert on failure classes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Evaluation { .. } => "evaluation",
            Error::Ellipticity { .. } => "ellipticity",
            Error::Nyquist { .. } => "nyquist",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::Definiteness(_) => "definiteness",
            Error::Convergence(_) => "convergence",
            Error::GridIncompatible(_) => "grid-incompatible",
            Error::Feasibility(_) => "feasibility",
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Evaluation { x, y, detail } => {
                write!(f, "field evaluation failed at ({x}, {y}): {detail}")
            }
            Error::Ellipticity { x, y, value } => write!(
                f,
                "coefficient must be strictly positive; kappa({x}, {y}) = {value}"
            ),
            Error::Nyquist { cutoff, m } => write!(
                f,
                "mode cutoff {cutoff} exceeds the {m} interior points per axis"
            ),
            Error::DimensionMismatch {
                expected,
                got,
                context,
            } => write!(f, "{context}: expected dimension {expected}, got {got}"),
            Error::Definiteness(msg) => write!(f, "matrix not positive definite: {msg}"),
            Error::Convergence(report) => write!(
                f,
                "{} did not converge within {} iterations (relative residual {:.3e})",
                report.solver_id, report.iterations, report.relative_residual
            ),
            Error::GridIncompatible(msg) => write!(f, "grid incompatible: {msg}"),
            Error::Feasibility(msg) => write!(f, "request too large: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

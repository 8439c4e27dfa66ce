//! Banded and dense symmetric linear algebra used by the homotopy tracer.

mod bordered;
mod dense;
mod eigen;

pub use bordered::{
    det_sign, min_singular_estimate, solve_bordered, BorderedLu, BorderedSystem, PIVOT_TOL,
};
pub use dense::DenseLu;
pub use eigen::{sym_eigen_full, sym_eigen_full_capped, DenseSymEig, DEFAULT_DENSE_CAP};

use crate::band::SymBandMatrix;
use crate::error::LinalgError;

/// Exact symmetric banded product.
pub fn matvec(m: &SymBandMatrix, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
    m.matvec(v)
}

/// Upper bound on the spectral radius from Gershgorin discs.
pub fn gershgorin_radius(m: &SymBandMatrix) -> f64 {
    m.gershgorin_radius()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

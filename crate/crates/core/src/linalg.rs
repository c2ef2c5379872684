//! Small dense linear-algebra helpers shared by the solvers and estimators.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub fn zeros(len: usize) -> Vec<Complex64> {
    vec![Complex64::new(0.0, 0.0); len]
}

pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm(v: &[Complex64]) -> f64 {
    norm_sqr(v).sqrt()
}

pub fn l1_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).sum()
}

/// `‖a − b‖₂`.
pub fn distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// `a^H b`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn to_nalgebra(m: ArrayView2<Complex64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

/// Largest eigenvalue of the Hermitian matrix `m`.
pub fn largest_eigenvalue(m: ArrayView2<Complex64>) -> Result<f64> {
    if m.nrows() == 0 || m.ncols() != m.nrows() {
        return Err(Error::InvalidArgument("eigenvalue needs a square matrix".into()));
    }
    let top = to_nalgebra(m).symmetric_eigen().eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::Numerical("eigenvalue is not finite".into()));
    }
    Ok(top)
}

/// Solve the Hermitian positive definite system `a x = b`.
pub fn solve_hpd(a: DMatrix<Complex64>, b: &[Complex64]) -> Result<Vec<Complex64>> {
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    Ok(chol.solve(&DVector::from_column_slice(b)).iter().copied().collect())
}

/// Least-squares solution of `a x ≈ b` for a tall full-column-rank `a`,
/// together with the smallest/largest singular value ratio.
pub fn least_squares(a: &DMatrix<Complex64>, b: &[Complex64]) -> Result<(Vec<Complex64>, f64)> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let smin = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    let x = svd
        .solve(&DVector::from_column_slice(b), smax * 1e-12)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok((x.iter().copied().collect(), ratio))
}

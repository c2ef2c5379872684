//! Batched kernels on stacked real matrices.
//!
//! A batch holds one sample per row in stacked form `[Re(x) | Im(x)]`, so a
//! row of a `B × 2L` matrix is one complex L-vector. Complex matrix products
//! become real GEMMs against the transposed stacked operator.

use ndarray::{linalg::general_mat_mul, Array2, ArrayView2, ArrayViewMut1};
use num_complex::Complex64;

/// Stack complex vectors of equal length into a `B × 2n` batch.
pub fn stack_rows<'a, I>(vectors: I, n: usize) -> Array2<f64>
where
    I: ExactSizeIterator<Item = &'a [Complex64]>,
{
    let mut out = Array2::zeros((vectors.len(), 2 * n));
    for (mut row, v) in out.rows_mut().into_iter().zip(vectors) {
        debug_assert_eq!(v.len(), n);
        for (i, z) in v.iter().enumerate() {
            row[i] = z.re;
            row[i + n] = z.im;
        }
    }
    out
}

pub fn unstack_row(m: &Array2<f64>, row: usize) -> Vec<Complex64> {
    let half = m.ncols() / 2;
    let r = m.row(row);
    (0..half).map(|i| Complex64::new(r[i], r[i + half])).collect()
}

pub fn unstack_rows(m: &Array2<f64>) -> Vec<Vec<Complex64>> {
    (0..m.nrows()).map(|b| unstack_row(m, b)).collect()
}

/// `c ← α a b + β c`.
pub fn gemm(alpha: f64, a: &ArrayView2<f64>, b: &ArrayView2<f64>, beta: f64, c: &mut Array2<f64>) {
    general_mat_mul(alpha, a, b, beta, c);
}

/// Complex soft threshold applied in place to one stacked row.
pub fn soft_threshold_row(mut row: ArrayViewMut1<f64>, theta: f64) {
    let half = row.len() / 2;
    for l in 0..half {
        let (re, im) = (row[l], row[l + half]);
        let mag = (re * re + im * im).sqrt();
        let scale = if mag > theta { (mag - theta) / mag } else { 0.0 };
        row[l] = re * scale;
        row[l + half] = im * scale;
    }
}

/// Entry magnitudes of one stacked row.
pub fn row_magnitudes(row: ndarray::ArrayView1<f64>, out: &mut Vec<f64>) {
    let half = row.len() / 2;
    out.clear();
    out.extend((0..half).map(|l| (row[l] * row[l] + row[l + half] * row[l + half]).sqrt()));
}

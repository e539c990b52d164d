//! Small complex matrix-vector kernels used by the AMP recursion.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

/// y = A x for an M x N matrix.
pub fn matvec(a: &Array2<Complex64>, x: &Array1<Complex64>) -> Array1<Complex64> {
    let (m, n) = a.dim();
    debug_assert_eq!(n, x.len());
    let mut y = Array1::zeros(m);
    for (row, out) in a.outer_iter().zip(y.iter_mut()) {
        let mut acc = Complex64::new(0.0, 0.0);
        for (aij, xj) in row.iter().zip(x.iter()) {
            acc += aij * xj;
        }
        *out = acc;
    }
    y
}

/// r = A^H v (Hermitian transpose times vector) for an M x N matrix.
pub fn matvec_hermitian(a: &Array2<Complex64>, v: &Array1<Complex64>) -> Array1<Complex64> {
    let (m, n) = a.dim();
    debug_assert_eq!(m, v.len());
    let mut r: Array1<Complex64> = Array1::zeros(n);
    for (row, vm) in a.outer_iter().zip(v.iter()) {
        for (aij, out) in row.iter().zip(r.iter_mut()) {
            *out += aij.conj() * vm;
        }
    }
    r
}

/// Squared l2 norm of a complex vector.
pub fn norm_sqr(v: &Array1<Complex64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

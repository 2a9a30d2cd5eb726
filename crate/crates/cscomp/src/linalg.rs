//! Dense complex linear-algebra helpers shared by the solvers and the
//! unrolled network.
//!
//! Row norms, Frobenius norms and the sparse-aware forward product defined
//! here are the single source of truth for every algorithm in the crate:
//! the AMP/L-AMP-MMV equivalence oracle relies on both paths performing
//! bit-identical arithmetic.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;

/// Dense complex matrix, row-major.
pub type CMat = Array2<Complex64>;
/// Dense complex vector.
pub type CVec = Array1<Complex64>;

/// Squared modulus of one entry.
#[inline]
pub fn abs2(z: Complex64) -> f64 {
    z.re * z.re + z.im * z.im
}

/// Frobenius norm ‖A‖ = √Σ|a_ij|².
pub fn fro_norm(a: &CMat) -> f64 {
    a.iter().map(|&z| abs2(z)).sum::<f64>().sqrt()
}

/// Squared Frobenius norm.
pub fn fro_norm_sq(a: &CMat) -> f64 {
    a.iter().map(|&z| abs2(z)).sum::<f64>()
}

/// l2 norm of each row of an N×P matrix.
pub fn row_norms(a: &CMat) -> Vec<f64> {
    a.axis_iter(Axis(0))
        .map(|row| row.iter().map(|&z| abs2(z)).sum::<f64>().sqrt())
        .collect()
}

/// Number of rows with at least one nonzero entry (‖A‖_{2,0}).
pub fn nonzero_row_count(a: &CMat) -> usize {
    a.axis_iter(Axis(0))
        .filter(|row| row.iter().any(|z| z.re != 0.0 || z.im != 0.0))
        .count()
}

/// Indices of rows with at least one nonzero entry, ascending.
pub fn nonzero_rows(a: &CMat) -> Vec<usize> {
    a.axis_iter(Axis(0))
        .enumerate()
        .filter(|(_, row)| row.iter().any(|z| z.re != 0.0 || z.im != 0.0))
        .map(|(i, _)| i)
        .collect()
}

/// Conjugate transpose.
pub fn adjoint(a: &CMat) -> CMat {
    let mut out = Array2::zeros((a.ncols(), a.nrows()));
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            out[[j, i]] = a[[i, j]].conj();
        }
    }
    out
}

/// Real part of the Frobenius inner product Re⟨A, B⟩ = Re tr(Aᴴ B).
pub fn re_inner(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| x.re * y.re + x.im * y.im)
        .sum()
}

/// A·B through the `gemm` crate's single-threaded complex kernels.
///
/// Every hot multiply in the crate goes through this one function so that
/// mirrored computations (AMP vs. an untrained unrolled network) stay
/// bitwise identical.
pub fn zdot(a: &CMat, b: &CMat) -> CMat {
    let (m, k) = a.dim();
    let (k2, n) = b.dim();
    assert_eq!(k, k2, "zdot: inner dimensions {k} and {k2} differ");
    let mut out: CMat = Array2::zeros((m, n));
    let (Some(asl), Some(bsl)) = (a.as_slice(), b.as_slice()) else {
        return a.dot(b);
    };
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    unsafe {
        gemm::gemm(
            m,
            n,
            k,
            out.as_mut_ptr() as *mut gemm::c64,
            1,
            n as isize,
            false,
            asl.as_ptr() as *const gemm::c64,
            1,
            k as isize,
            bsl.as_ptr() as *const gemm::c64,
            1,
            n as isize,
            gemm::c64::new(0.0, 0.0),
            gemm::c64::new(1.0, 0.0),
            false,
            false,
            false,
            gemm::Parallelism::None,
        );
    }
    out
}

/// A·X exploiting row sparsity of X: only the nonzero rows of X (equivalently
/// the matching columns of A) enter the product. Falls back to a dense
/// multiply when X is mostly dense. The result equals `a.dot(x)` up to
/// floating-point summation order.
pub fn apply_rowsparse(a: &CMat, x: &CMat) -> CMat {
    debug_assert_eq!(a.ncols(), x.nrows());
    let active = nonzero_rows(x);
    if active.len() * 2 >= x.nrows() {
        return zdot(a, x);
    }
    if active.is_empty() {
        return Array2::zeros((a.nrows(), x.ncols()));
    }
    let a_sub = a.select(Axis(1), &active);
    let x_sub = x.select(Axis(0), &active);
    zdot(&a_sub, &x_sub)
}

/// A[:, rows]·V for a compact row block V (one row of V per entry of `rows`).
/// The row-sparse product without materializing the full N×P operand.
pub fn apply_on_rows(a: &CMat, rows: &[usize], vals: &CMat) -> CMat {
    debug_assert_eq!(rows.len(), vals.nrows());
    if rows.is_empty() {
        return Array2::zeros((a.nrows(), vals.ncols()));
    }
    let a_sub = a.select(Axis(1), rows);
    zdot(&a_sub, vals)
}

/// ndarray → nalgebra copy.
pub fn to_na(a: &CMat) -> DMatrix<Complex64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// nalgebra → ndarray copy.
pub fn from_na(a: &DMatrix<Complex64>) -> CMat {
    Array2::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
}

/// Minimum-norm least-squares solution of A·Z ≈ B via SVD.
///
/// Returns the solution together with a flag that is true when A is
/// rank-deficient (singular values below the numerical tolerance were
/// discarded, i.e. the minimum-norm fallback was taken).
pub fn lstsq_min_norm(a: &CMat, b: &CMat) -> (CMat, bool) {
    debug_assert_eq!(a.nrows(), b.nrows());
    let k = a.ncols();
    if k == 0 {
        return (Array2::zeros((0, b.ncols())), false);
    }
    let na_a = to_na(a);
    let na_b = to_na(b);
    let svd = na_a.svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    if sigma_max == 0.0 {
        return (Array2::zeros((k, b.ncols())), true);
    }
    let eps = sigma_max * (a.nrows().max(k) as f64) * f64::EPSILON;
    let rank = svd.rank(eps);
    let sol = svd
        .solve(&na_b, eps)
        .expect("SVD solve: U and V were requested");
    (from_na(&sol), rank < k)
}

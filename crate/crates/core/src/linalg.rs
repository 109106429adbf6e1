//! Small dense eigen-solves and spectral matrix functions.
//!
//! Everything here works on matrices of dimension at most a handful, so the
//! routines favour clarity over blocking or workspace reuse.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

/// Eigen-decomposition of a real symmetric matrix, eigenvalues ascending.
pub fn sym_eigh(a: &RMat) -> (Vec<f64>, RMat) {
    let sym = symmetrize(a);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let n = a.nrows();
    let mut vecs = RMat::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (col, &k) in order.iter().enumerate() {
        vals.push(eig.eigenvalues[k]);
        vecs.set_column(col, &eig.eigenvectors.column(k));
    }
    (vals, vecs)
}

/// Eigen-decomposition of a complex Hermitian matrix, eigenvalues ascending.
pub fn herm_eigh(a: &CMat) -> (Vec<f64>, CMat) {
    let h = (a + a.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let n = a.nrows();
    let mut vecs = CMat::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (col, &k) in order.iter().enumerate() {
        vals.push(eig.eigenvalues[k]);
        vecs.set_column(col, &eig.eigenvectors.column(k));
    }
    (vals, vecs)
}

pub fn symmetrize(a: &RMat) -> RMat {
    (a + a.transpose()).scale(0.5)
}

/// Applies `f` to the spectrum of a symmetric matrix.
pub fn sym_apply(a: &RMat, f: impl Fn(f64) -> f64) -> RMat {
    let (vals, vecs) = sym_eigh(a);
    let mapped = DVector::from_iterator(vals.len(), vals.iter().map(|&v| f(v)));
    &vecs * RMat::from_diagonal(&mapped) * vecs.transpose()
}

/// Principal square root with negative eigenvalues clipped at zero.
pub fn sym_sqrt(a: &RMat) -> RMat {
    sym_apply(a, |v| v.max(0.0).sqrt())
}

/// Real power of a positive-definite symmetric matrix.
pub fn sym_pow(a: &RMat, p: f64) -> RMat {
    sym_apply(a, |v| v.powf(p))
}

pub fn sym_inverse(a: &RMat) -> RMat {
    sym_apply(a, |v| 1.0 / v)
}

/// Moore–Penrose inverse; eigenvalues at or below `cutoff` are zeroed.
pub fn sym_pinv(a: &RMat, cutoff: f64) -> RMat {
    sym_apply(a, |v| if v > cutoff { 1.0 / v } else { 0.0 })
}

pub fn max_abs(a: &RMat) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn max_abs_c(a: &CMat) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.norm()))
}

pub fn trace_c(a: &CMat) -> Complex64 {
    (0..a.nrows()).map(|i| a[(i, i)]).sum()
}

/// `Re tr(A B)` without forming the product.
pub fn re_trace_prod(a: &CMat, b: &CMat) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            let x = a[(i, k)] * b[(k, i)];
            acc += x.re;
        }
    }
    acc
}

pub fn identity_c(d: usize) -> CMat {
    CMat::identity(d, d)
}

/// Orders eigenvectors by descending eigenvalue and fixes each column's sign so
/// that its largest-magnitude component (first one on ties) is positive.
pub fn canonical_frame(a: &RMat) -> (Vec<f64>, RMat) {
    let (vals, vecs) = sym_eigh(a);
    let n = vals.len();
    let mut out_vals = Vec::with_capacity(n);
    let mut out = RMat::zeros(n, n);
    for (col, k) in (0..n).rev().enumerate() {
        out_vals.push(vals[k]);
        let mut v = vecs.column(k).into_owned();
        let mut best = 0;
        for i in 1..n {
            if v[i].abs() > v[best].abs() + 1e-12 {
                best = i;
            }
        }
        if v[best] < 0.0 {
            v = -v;
        }
        out.set_column(col, &v);
    }
    (out_vals, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_squares_back() {
        let a = RMat::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 0.5]);
        let s = sym_sqrt(&a);
        assert!(max_abs(&(&s * &s - &a)) < 1e-12);
        let inv = sym_inverse(&a);
        assert!(max_abs(&(&inv * &a - RMat::identity(3, 3))) < 1e-12);
    }

    #[test]
    fn hermitian_eigen_reconstructs() {
        let i = Complex64::i();
        let a = CMat::from_row_slice(2, 2, &[1.0.into(), 0.5 * i, -0.5 * i, 2.0.into()]);
        let (vals, vecs) = herm_eigh(&a);
        assert!(vals[0] <= vals[1]);
        let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            2,
            vals.iter().map(|&v| Complex64::new(v, 0.0)),
        ));
        let back = &vecs * d * vecs.adjoint();
        assert!(max_abs_c(&(back - a)) < 1e-12);
    }

    #[test]
    fn pinv_zeroes_null_space() {
        let a = RMat::from_diagonal(&DVector::from_vec(vec![0.25, 0.0]));
        let p = sym_pinv(&a, 1e-10);
        assert!((p[(0, 0)] - 4.0).abs() < 1e-12);
        assert_eq!(p[(1, 1)], 0.0);
    }

    #[test]
    fn canonical_frame_is_descending_and_signed() {
        let a = RMat::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 2.0]));
        let (vals, vecs) = canonical_frame(&a);
        assert_eq!(vals, vec![3.0, 2.0, 1.0]);
        assert!((vecs[(1, 0)] - 1.0).abs() < 1e-12);
        assert!((vecs[(2, 1)] - 1.0).abs() < 1e-12);
    }
}

//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative eigenvalue cutoff used when a matrix is treated as singular.
pub const SINGULAR_RTOL: f64 = 1e-12;

/// Moore-Penrose inverse of a symmetric matrix through its eigendecomposition.
///
/// Returns the inverse and whether any eigenvalue was dropped.
pub fn pinv_sym(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let k = m.nrows();
    if k == 0 {
        return (DMatrix::zeros(0, 0), false);
    }
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let cut = scale * SINGULAR_RTOL * k as f64;
    let mut dropped = false;
    let inv_vals = DVector::from_iterator(
        k,
        eig.eigenvalues.iter().map(|&v| {
            if v.abs() > cut && v.abs() > 0.0 {
                1.0 / v
            } else {
                dropped = true;
                0.0
            }
        }),
    );
    let q = &eig.eigenvectors;
    (q * DMatrix::from_diagonal(&inv_vals) * q.transpose(), dropped)
}

/// Inverse of a general square matrix, falling back to the SVD pseudo-inverse.
///
/// The flag is true when the fallback was taken.
pub fn inverse_or_pinv(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    if m.nrows() == 0 {
        return (DMatrix::zeros(0, 0), false);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin > smax * SINGULAR_RTOL * m.nrows() as f64 {
        if let Some(inv) = m.clone().try_inverse() {
            if inv.iter().all(|v| v.is_finite()) {
                return (inv, false);
            }
        }
    }
    let eps = (smax * SINGULAR_RTOL * m.nrows() as f64).max(f64::MIN_POSITIVE);
    let pinv = svd.pseudo_inverse(eps).unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()));
    (pinv, true)
}

/// `(A + A^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `m += w * v v^T`.
pub fn add_outer(m: &mut DMatrix<f64>, v: &[f64], w: f64) {
    let k = v.len();
    for c in 0..k {
        let vc = w * v[c];
        if vc == 0.0 {
            continue;
        }
        for r in 0..k {
            m[(r, c)] += v[r] * vc;
        }
    }
}

/// Rows and columns `idx` of `m`.
pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

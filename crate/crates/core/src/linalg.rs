//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted
/// descending and eigenvector columns carried along.
pub fn sym_eig_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Spectral norm of a symmetric matrix (largest |eigenvalue|).
pub fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    eig.eigenvalues.iter().fold(0.0, |acc, &v| acc.max(v.abs()))
}

/// Spectral norm of a general matrix (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().iter().fold(0.0, |acc, &s| acc.max(s))
}

/// Replace `m` by `(m + mᵀ)/2`, killing round-off asymmetry.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Error unless `‖m − mᵀ‖_max ≤ tol · (1 + ‖m‖_max)`.
pub fn check_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    let scale = 1.0 + m.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let mut max_asym = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            max_asym = max_asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if max_asym > tol * scale {
        return Err(Error::NotSymmetric { max_asym });
    }
    Ok(())
}

/// Numerical rank: count of singular values above `rel_tol · σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = m.clone().singular_values();
    let max = sv.iter().fold(0.0f64, |acc, &s| acc.max(s));
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Median of a non-empty slice (mean of the two middle values for even
/// lengths). Panics on NaN input.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in median input"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

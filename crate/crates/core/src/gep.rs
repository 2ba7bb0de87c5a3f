//! Regularized symmetric-definite generalized eigensolver plus the
//! definiteness and eigenvalue-comparison utilities around it.
//!
//! The pencil D z = λ (S + εI) z is solved by whitening: a symmetric
//! eigendecomposition of B = S + εI gives B^{-1/2} explicitly, the
//! symmetric operator B^{-1/2} D B^{-1/2} is eigendecomposed, and the
//! eigenvectors are mapped back by B^{-1/2}. The returned columns satisfy
//! z_iᵀ B z_i = 1 and are mutually B-orthogonal.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{check_symmetric, sym_eig_desc, symmetrize};
use crate::scatter::ScatterPair;
use crate::seeding::{self, stream};

/// Solution of a regularized pencil, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct EigenSolution {
    /// λ_1 ≥ … ≥ λ_n.
    pub eigenvalues: DVector<f64>,
    /// Columns z_i, normalized so z_iᵀ(S+εI)z_i = 1, sign-canonicalized
    /// (first coordinate of significant magnitude is positive).
    pub eigenvectors: DMatrix<f64>,
    /// Regularizer used for this solve.
    pub epsilon: f64,
    /// Per-view row partition of the eigenvectors (sample counts in kernel
    /// space, feature dimensions in linear space).
    pub blocks: Vec<usize>,
    /// Number of leading pairs flagged as the retained subspace.
    pub top: usize,
}

impl EigenSolution {
    /// The n × l matrix of the top-l eigenvector columns.
    pub fn top_columns(&self) -> DMatrix<f64> {
        self.eigenvectors.columns(0, self.top).into_owned()
    }

    /// Rows of eigenvector column block belonging to view `j`.
    pub fn view_slice(&self, view: usize, l: usize) -> DMatrix<f64> {
        let start: usize = self.blocks[..view].iter().sum();
        self.eigenvectors.view((start, 0), (self.blocks[view], l)).into_owned()
    }
}

/// Default regularizer: 1e-6 · trace(S)/n, floored at 1e-12 for
/// zero-trace inputs.
pub fn default_epsilon(s: &DMatrix<f64>) -> f64 {
    let n = s.nrows().max(1) as f64;
    (1e-6 * s.trace() / n).max(1e-12)
}

/// Solve D z = λ (S + εI) z for a scatter pair, flagging the top `l` pairs.
pub fn solve_regularized(pair: &ScatterPair, epsilon: f64, l: usize) -> Result<EigenSolution> {
    let n = pair.d.nrows();
    if l < 1 || l > n {
        return Err(Error::InvalidArgument(format!("subspace dimension {l} outside [1, {n}]")));
    }
    let (eigenvalues, eigenvectors) = solve_pencil(&pair.d, &pair.s, epsilon)?;
    Ok(EigenSolution { eigenvalues, eigenvectors, epsilon, blocks: pair.blocks.clone(), top: l })
}

/// Whitened solve on raw symmetric matrices; returns all n pairs sorted
/// descending.
pub fn solve_pencil(
    d: &DMatrix<f64>,
    s: &DMatrix<f64>,
    epsilon: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
    }
    let n = d.nrows();
    if d.ncols() != n || s.nrows() != n || s.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "pencil needs square matrices of equal size, got {}x{} and {}x{}",
            d.nrows(),
            d.ncols(),
            s.nrows(),
            s.ncols()
        )));
    }
    check_symmetric(d, 1e-8)?;
    check_symmetric(s, 1e-8)?;

    let mut b = s.clone();
    for i in 0..n {
        b[(i, i)] += epsilon;
    }
    let (b_vals, b_vecs) = sym_eig_desc(&b);
    let min_eig = b_vals[n - 1];
    if min_eig <= 0.0 {
        return Err(Error::FactorizationFailed { min_eig });
    }
    let inv_sqrt = DMatrix::from_diagonal(&b_vals.map(|q| 1.0 / q.sqrt()));
    let b_inv_half = &b_vecs * inv_sqrt * b_vecs.transpose();

    let mut whitened = &b_inv_half * d * &b_inv_half;
    symmetrize(&mut whitened);
    let (values, mut y) = sym_eig_desc(&whitened);
    canonicalize_degenerate_clusters(&values, &mut y);
    let mut z = &b_inv_half * y;

    for c in 0..n {
        canonicalize_sign(&mut z, c);
    }
    // stable order: descending eigenvalue, ties broken lexicographically
    // on the canonicalized eigenvector columns
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap()
            .then_with(|| compare_columns(&z, a, b))
    });
    let sorted_vals = DVector::from_iterator(n, order.iter().map(|&i| values[i]));
    let mut sorted_vecs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        sorted_vecs.set_column(dst, &z.column(src));
    }
    Ok((sorted_vals, sorted_vecs))
}

/// Replace the eigenvector basis of each numerically degenerate eigenvalue
/// cluster by a canonical one: the basis of the cluster's invariant
/// subspace closest (in Frobenius norm, via the polar factor) to the
/// matching leading identity columns.
///
/// Any orthonormal basis of a degenerate cluster diagonalizes the operator
/// equally well, but the one the QL iteration returns is an arbitrary
/// function of rounding noise. Aligning to a fixed reference makes the
/// output a deterministic, stable function of the input pencil, so spans
/// that extend into a degenerate cluster become comparable across nearby
/// problems.
fn canonicalize_degenerate_clusters(values: &DVector<f64>, y: &mut DMatrix<f64>) {
    let n = values.len();
    let scale = 1.0f64.max(values.iter().fold(0.0f64, |a, &v| a.max(v.abs())));
    let tol = 1e-9 * scale;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (values[start] - values[end]).abs() <= tol {
            end += 1;
        }
        let k = end - start;
        if k >= 2 {
            let cluster = y.columns(start, k).into_owned();
            // A = (first k rows of the cluster basis)ᵀ = clusterᵀ·[e_1…e_k]
            let a = cluster.rows(0, k).transpose();
            let svd = a.svd(true, true);
            let sigma = &svd.singular_values;
            let max = sigma.iter().fold(0.0f64, |acc, &s| acc.max(s));
            let min = sigma.iter().fold(f64::INFINITY, |acc, &s| acc.min(s));
            if max > 0.0 && min > 1e-12 * max {
                let q = svd.u.unwrap() * svd.v_t.unwrap();
                let canonical = cluster * q;
                y.columns_mut(start, k).copy_from(&canonical);
            }
        }
        start = end;
    }
}

fn canonicalize_sign(z: &mut DMatrix<f64>, col: usize) {
    let max_abs = z.column(col).iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if max_abs == 0.0 {
        return;
    }
    let lead = z.column(col).iter().find(|v| v.abs() > 1e-10 * max_abs).copied().unwrap_or(0.0);
    if lead < 0.0 {
        for r in 0..z.nrows() {
            z[(r, col)] = -z[(r, col)];
        }
    }
}

fn compare_columns(z: &DMatrix<f64>, a: usize, b: usize) -> std::cmp::Ordering {
    for r in 0..z.nrows() {
        match z[(r, a)].partial_cmp(&z[(r, b)]).unwrap() {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

/// Multi-start estimate of the Crawford number
/// 𝓒(A,B) = min over unit x of √((xᵀAx)² + (xᵀBx)²).
#[derive(Debug, Clone, Serialize)]
pub struct CrawfordEstimate {
    pub value: f64,
    /// False when the achieved value is numerically zero, i.e. the pair is
    /// not certified definite.
    pub definite: bool,
}

/// Estimate 𝓒(A,B) by projected gradient descent with step halving from
/// `n_restarts` random unit vectors plus the extreme eigenvectors of A, B,
/// A+B, and A−B.
///
/// The objective is nonconvex, so the result is an upper bound on the true
/// Crawford number; callers should treat it as an estimate.
pub fn crawford_estimate(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    n_restarts: usize,
    tol: f64,
    seed: u64,
) -> Result<CrawfordEstimate> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(Error::DimensionMismatch("crawford_estimate needs equal square inputs".into()));
    }
    check_symmetric(a, 1e-8)?;
    check_symmetric(b, 1e-8)?;
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        return Ok(CrawfordEstimate { value: 0.0, definite: false });
    }

    let objective = |x: &DVector<f64>| -> f64 {
        let qa = (x.transpose() * a * x)[(0, 0)];
        let qb = (x.transpose() * b * x)[(0, 0)];
        qa.hypot(qb)
    };

    let mut starts: Vec<DVector<f64>> = Vec::new();
    for m in [a.clone(), b.clone(), a + b, a - b] {
        let (_, vecs) = sym_eig_desc(&m);
        starts.push(vecs.column(0).into_owned());
        starts.push(vecs.column(n - 1).into_owned());
    }
    let mut rng = stream(seed, &[seeding::TAG_CRAWFORD]);
    for _ in 0..n_restarts {
        let mut x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = x.norm();
        if norm > 0.0 {
            x /= norm;
            starts.push(x);
        }
    }

    let mut best = f64::INFINITY;
    for mut x in starts {
        let mut f = objective(&x);
        let mut step = 1.0;
        for _ in 0..300 {
            if f <= tol * scale {
                break;
            }
            let qa = (x.transpose() * a * &x)[(0, 0)];
            let qb = (x.transpose() * b * &x)[(0, 0)];
            // ∇f = 2(qa·A + qb·B)x / f, projected to the sphere tangent
            let mut g = (2.0 / f) * (qa * (a * &x) + qb * (b * &x));
            let radial = g.dot(&x);
            g -= radial * &x;
            let gnorm = g.norm();
            if gnorm <= tol * scale {
                break;
            }
            let mut advanced = false;
            while step > 1e-14 {
                let mut cand = &x - step * &g;
                let norm = cand.norm();
                if norm > 0.0 {
                    cand /= norm;
                    let fc = objective(&cand);
                    if fc < f {
                        x = cand;
                        f = fc;
                        step *= 1.5;
                        advanced = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !advanced {
                break;
            }
        }
        best = best.min(f);
    }
    let definite = best > 1e-10 * scale;
    Ok(CrawfordEstimate { value: best, definite })
}

/// Chordal distance between generalized eigenvalue pairs:
/// ρ((a₁,b₁),(a₂,b₂)) = |a₁b₂ − a₂b₁| / (√(a₁²+b₁²)·√(a₂²+b₂²)).
///
/// Symmetric, scale-invariant, and well defined for infinite eigenvalues
/// represented as (a, 0).
pub fn chordal_distance(p1: (f64, f64), p2: (f64, f64)) -> Result<f64> {
    let n1 = p1.0.hypot(p1.1);
    let n2 = p2.0.hypot(p2.1);
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::ZeroPair);
    }
    Ok((p1.0 * p2.1 - p2.0 * p1.1).abs() / (n1 * n2))
}

/// Eigengap δ = λ_l − λ̂_{l+1} between an exact and an approximate
/// solution (1-based l). May be ≤ 0, in which case gap-based bounds are
/// inapplicable.
pub fn eigengap_delta(exact: &EigenSolution, approx: &EigenSolution, l: usize) -> Result<f64> {
    let n = exact.eigenvalues.len();
    if approx.eigenvalues.len() != n {
        return Err(Error::DimensionMismatch("eigengap needs solutions of equal size".into()));
    }
    if l < 1 || l >= n {
        return Err(Error::InvalidArgument(format!("l must be in [1, {n}), got {l}")));
    }
    Ok(exact.eigenvalues[l - 1] - approx.eigenvalues[l])
}

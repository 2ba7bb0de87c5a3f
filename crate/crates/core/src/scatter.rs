//! Between-class and within-class scatter for multi-view discriminant
//! analysis, in two equivalent forms.
//!
//! The structural matrices are assembled from class indicator vectors.
//! With e_jⁱ the class-i indicator of view j and e_j the all-ones vector,
//! the n × n block matrices are
//!
//! ```text
//! H_jr^D = Σ_i (1/n_i) e_jⁱ (e_rⁱ)ᵀ − (1/n) e_j e_rᵀ          (all j, r)
//! H_jj^S = I − Σ_i (1/n_i) e_jⁱ (e_jⁱ)ᵀ
//! H_jr^S = −Σ_i (1/n_i) e_jⁱ (e_rⁱ)ᵀ                          (j ≠ r)
//! ```
//!
//! Sandwiching with the block-diagonal Gram matrix K = diag(K_1,…,K_v)
//! gives the kernel-space pair D = KᵀH^DK, S = KᵀH^SK; the linear-space
//! pair applies the same structure to raw features and is Σd_j square.
//! Both H^D and H^S are differences of orthogonal projections and are
//! positive semi-definite; for balanced layouts the block norms are
//! ‖H_jr^D‖ = 1/v, ‖H_jj^S‖ = 1, ‖H_jr^S‖ = 1/v.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dataio::{MultiViewDataset, ViewLayout};
use crate::error::{Error, Result};
use crate::linalg::{check_symmetric, numerical_rank, spectral_norm, sym_eig_desc, symmetrize};

/// Class indicator vectors for one layout.
pub struct IndicatorBasis<'a> {
    layout: &'a ViewLayout,
}

impl<'a> IndicatorBasis<'a> {
    pub fn new(layout: &'a ViewLayout) -> Self {
        IndicatorBasis { layout }
    }

    /// e_jⁱ: ones at the class-`class` rows of view `view`.
    pub fn class_vector(&self, view: usize, class: usize) -> DVector<f64> {
        let mut v = DVector::zeros(self.layout.per_view[view]);
        let range = self.layout.class_ranges(view)[class].clone();
        for r in range {
            v[r] = 1.0;
        }
        v
    }

    /// e_j: all ones, length n_j.
    pub fn ones(&self, view: usize) -> DVector<f64> {
        DVector::from_element(self.layout.per_view[view], 1.0)
    }
}

/// The assembled n × n structure matrices with their layout.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureMatrices {
    pub hd: DMatrix<f64>,
    pub hs: DMatrix<f64>,
    pub layout: ViewLayout,
}

impl StructureMatrices {
    /// Starting row/column of each view's block.
    pub fn view_offsets(&self) -> Vec<usize> {
        view_offsets(&self.layout.per_view)
    }

    pub fn hd_block(&self, j: usize, r: usize) -> DMatrix<f64> {
        self.block(&self.hd, j, r)
    }

    pub fn hs_block(&self, j: usize, r: usize) -> DMatrix<f64> {
        self.block(&self.hs, j, r)
    }

    fn block(&self, m: &DMatrix<f64>, j: usize, r: usize) -> DMatrix<f64> {
        let off = self.view_offsets();
        m.view((off[j], off[r]), (self.layout.per_view[j], self.layout.per_view[r])).into_owned()
    }
}

fn view_offsets(per_view: &[usize]) -> Vec<usize> {
    let mut off = Vec::with_capacity(per_view.len());
    let mut acc = 0;
    for &n in per_view {
        off.push(acc);
        acc += n;
    }
    off
}

/// Global class index of every row, views concatenated in order.
fn global_row_classes(layout: &ViewLayout) -> Vec<usize> {
    let mut out = Vec::with_capacity(layout.total);
    for j in 0..layout.views {
        out.extend(layout.row_classes(j));
    }
    out
}

/// Assemble H^D and H^S for a canonical class-grouped layout.
pub fn build_structure(layout: &ViewLayout) -> Result<StructureMatrices> {
    if let Some(i) = layout.per_class.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass { class: layout.class_order[i].clone() });
    }
    let n = layout.total;
    let inv_n = 1.0 / n as f64;
    let classes = global_row_classes(layout);
    let mut hd = DMatrix::zeros(n, n);
    let mut hs = DMatrix::zeros(n, n);
    for p in 0..n {
        for q in 0..n {
            let same_class = classes[p] == classes[q];
            let class_term =
                if same_class { 1.0 / layout.per_class[classes[p]] as f64 } else { 0.0 };
            hd[(p, q)] = class_term - inv_n;
            hs[(p, q)] = if p == q { 1.0 } else { 0.0 } - class_term;
        }
    }
    Ok(StructureMatrices { hd, hs, layout: layout.clone() })
}

/// Which space a scatter pair lives in.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScatterMode {
    /// n × n, one row block per view of n_j rows.
    KernelSpace,
    /// Σd_j square, one row block per view of d_j rows.
    LinearSpace,
}

/// A between-class / within-class scatter pair.
///
/// `blocks` records the per-view row partition of the matrices (and of the
/// eigenvectors of any pencil built from them): view sample counts in
/// kernel space, view feature dimensions in linear space.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPair {
    pub d: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub mode: ScatterMode,
    pub blocks: Vec<usize>,
}

/// Kernel-space pair D = KᵀH^DK, S = KᵀH^SK with K = diag(K_1,…,K_v).
///
/// Products are taken block by block and the results symmetrized, since
/// downstream symmetric eigensolvers need exact symmetry.
pub fn build_kernel_scatter(
    k_blocks: &[DMatrix<f64>],
    h: &StructureMatrices,
) -> Result<ScatterPair> {
    let layout = &h.layout;
    if k_blocks.len() != layout.views {
        return Err(Error::DimensionMismatch(format!(
            "{} gram blocks for {} views",
            k_blocks.len(),
            layout.views
        )));
    }
    for (j, k) in k_blocks.iter().enumerate() {
        let nj = layout.per_view[j];
        if k.nrows() != nj || k.ncols() != nj {
            return Err(Error::DimensionMismatch(format!(
                "gram block {j} is {}x{}, layout expects {nj}x{nj}",
                k.nrows(),
                k.ncols()
            )));
        }
        check_symmetric(k, 1e-8)?;
    }
    let n = layout.total;
    let off = h.view_offsets();
    let mut d = DMatrix::zeros(n, n);
    let mut s = DMatrix::zeros(n, n);
    for j in 0..layout.views {
        for r in 0..layout.views {
            let (nj, nr) = (layout.per_view[j], layout.per_view[r]);
            let hd_block = h.hd.view((off[j], off[r]), (nj, nr));
            let hs_block = h.hs.view((off[j], off[r]), (nj, nr));
            let kd = k_blocks[j].transpose() * hd_block * &k_blocks[r];
            let ks = k_blocks[j].transpose() * hs_block * &k_blocks[r];
            d.view_mut((off[j], off[r]), (nj, nr)).copy_from(&kd);
            s.view_mut((off[j], off[r]), (nj, nr)).copy_from(&ks);
        }
    }
    symmetrize(&mut d);
    symmetrize(&mut s);
    Ok(ScatterPair { d, s, mode: ScatterMode::KernelSpace, blocks: layout.per_view.clone() })
}

/// Linear-space pair assembled blockwise from class means.
///
/// For views j, r with class means μ_ij = (1/n_ij) Σ_k x_ijk:
///
/// ```text
/// S_jj = Σ_i (Σ_k x_ijk x_ijkᵀ − (n_ij²/n_i) μ_ij μ_ijᵀ)
/// S_jr = −Σ_i (n_ij n_ir / n_i) μ_ij μ_irᵀ                     (j ≠ r)
/// D_jr = Σ_i (n_ij n_ir / n_i) μ_ij μ_irᵀ
///        − (1/n)(Σ_i n_ij μ_ij)(Σ_i n_ir μ_ir)ᵀ
/// ```
pub fn build_linear_scatter(ds: &MultiViewDataset) -> Result<ScatterPair> {
    let layout = &ds.layout;
    let dims = ds.dims();
    let v = layout.views;
    let c = layout.classes;
    for i in 0..c {
        for j in 0..v {
            if layout.per_class_view[i][j] == 0 {
                return Err(Error::MissingClassInView {
                    class: layout.class_order[i].clone(),
                    view: j,
                });
            }
        }
    }
    // class means and class-weighted sums per view
    let mut means: Vec<Vec<DVector<f64>>> = Vec::with_capacity(v);
    let mut weighted_sum: Vec<DVector<f64>> = Vec::with_capacity(v);
    for j in 0..v {
        let mut per_class = Vec::with_capacity(c);
        let mut acc = DVector::zeros(dims[j]);
        for i in 0..c {
            let rows = ds.class_rows(j, i);
            let mu = crate::dataio::row_mean(&rows);
            acc += layout.per_class_view[i][j] as f64 * &mu;
            per_class.push(mu);
        }
        means.push(per_class);
        weighted_sum.push(acc);
    }

    let total_dim: usize = dims.iter().sum();
    let off = view_offsets(&dims);
    let inv_n = 1.0 / layout.total as f64;
    let mut d = DMatrix::zeros(total_dim, total_dim);
    let mut s = DMatrix::zeros(total_dim, total_dim);
    for j in 0..v {
        for r in 0..v {
            let mut d_block = DMatrix::zeros(dims[j], dims[r]);
            let mut s_block = DMatrix::zeros(dims[j], dims[r]);
            for i in 0..c {
                let w = (layout.per_class_view[i][j] * layout.per_class_view[i][r]) as f64
                    / layout.per_class[i] as f64;
                let outer = w * &means[j][i] * means[r][i].transpose();
                d_block += &outer;
                s_block -= &outer;
            }
            if j == r {
                let x = &ds.views[j];
                s_block += x.transpose() * x;
            }
            d_block -= inv_n * &weighted_sum[j] * weighted_sum[r].transpose();
            d.view_mut((off[j], off[r]), (dims[j], dims[r])).copy_from(&d_block);
            s.view_mut((off[j], off[r]), (dims[j], dims[r])).copy_from(&s_block);
        }
    }
    symmetrize(&mut d);
    symmetrize(&mut s);
    Ok(ScatterPair { d, s, mode: ScatterMode::LinearSpace, blocks: dims })
}

/// Numeric spectrum report for a structure pair.
#[derive(Debug, Clone, Serialize)]
pub struct StructureSpectrumReport {
    pub balanced: bool,
    pub hd_norm: f64,
    pub hs_norm: f64,
    pub hd_block_norms: Vec<Vec<f64>>,
    pub hs_block_norms: Vec<Vec<f64>>,
    pub hd_block_ranks: Vec<Vec<usize>>,
    /// Full-matrix eigenvalues, descending.
    pub hd_eigenvalues: Vec<f64>,
    pub hs_eigenvalues: Vec<f64>,
    /// Count of eigenvalues within 1e-8 of 1.
    pub hd_unit_eigenvalues: usize,
    pub hs_unit_eigenvalues: usize,
    pub hs_zero_eigenvalues: usize,
    /// Smallest eigenvalue of each matrix (PSD margin).
    pub psd_margin_hd: f64,
    pub psd_margin_hs: f64,
    /// Deviations from the balanced-layout closed forms, when applicable.
    pub balanced_checks: Option<BalancedChecks>,
    pub notes: Vec<String>,
}

/// Deviations from the balanced closed forms: block norms 1/v and 1, and
/// unit full-matrix norms.
#[derive(Debug, Clone, Serialize)]
pub struct BalancedChecks {
    pub max_hd_block_norm_dev: f64,
    pub max_hs_diag_norm_dev: f64,
    pub max_hs_off_norm_dev: f64,
    pub hd_norm_dev: f64,
    pub hs_norm_dev: f64,
}

const UNIT_TOL: f64 = 1e-8;

pub fn structure_spectrum_report(h: &StructureMatrices) -> StructureSpectrumReport {
    let layout = &h.layout;
    let v = layout.views;
    let balanced = layout.balanced();
    let mut hd_block_norms = vec![vec![0.0; v]; v];
    let mut hs_block_norms = vec![vec![0.0; v]; v];
    let mut hd_block_ranks = vec![vec![0usize; v]; v];
    for j in 0..v {
        for r in 0..v {
            let db = h.hd_block(j, r);
            let sb = h.hs_block(j, r);
            hd_block_norms[j][r] = spectral_norm(&db);
            hs_block_norms[j][r] = spectral_norm(&sb);
            hd_block_ranks[j][r] = numerical_rank(&db, 1e-10);
        }
    }
    let (hd_eigs, _) = sym_eig_desc(&h.hd);
    let (hs_eigs, _) = sym_eig_desc(&h.hs);
    let count_near = |vals: &nalgebra::DVector<f64>, target: f64| {
        vals.iter().filter(|&&x| (x - target).abs() <= UNIT_TOL).count()
    };
    let hd_norm = hd_eigs.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let hs_norm = hs_eigs.iter().fold(0.0f64, |a, &x| a.max(x.abs()));

    let mut notes = Vec::new();
    let balanced_checks = if balanced {
        let inv_v = 1.0 / v as f64;
        let mut max_hd = 0.0f64;
        let mut max_hs_diag = 0.0f64;
        let mut max_hs_off = 0.0f64;
        for j in 0..v {
            for r in 0..v {
                max_hd = max_hd.max((hd_block_norms[j][r] - inv_v).abs());
                if j == r {
                    max_hs_diag = max_hs_diag.max((hs_block_norms[j][r] - 1.0).abs());
                } else {
                    max_hs_off = max_hs_off.max((hs_block_norms[j][r] - inv_v).abs());
                }
            }
        }
        Some(BalancedChecks {
            max_hd_block_norm_dev: max_hd,
            max_hs_diag_norm_dev: max_hs_diag,
            max_hs_off_norm_dev: max_hs_off,
            hd_norm_dev: (hd_norm - 1.0).abs(),
            hs_norm_dev: (hs_norm - 1.0).abs(),
        })
    } else {
        notes.push("balanced-only checks skipped".to_string());
        None
    };

    StructureSpectrumReport {
        balanced,
        hd_norm,
        hs_norm,
        hd_block_norms,
        hs_block_norms,
        hd_block_ranks,
        hd_unit_eigenvalues: count_near(&hd_eigs, 1.0),
        hs_unit_eigenvalues: count_near(&hs_eigs, 1.0),
        hs_zero_eigenvalues: count_near(&hs_eigs, 0.0),
        psd_margin_hd: hd_eigs[hd_eigs.len() - 1],
        psd_margin_hs: hs_eigs[hs_eigs.len() - 1],
        hd_eigenvalues: hd_eigs.iter().cloned().collect(),
        hs_eigenvalues: hs_eigs.iter().cloned().collect(),
        balanced_checks,
        notes,
    }
}

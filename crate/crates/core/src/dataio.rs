//! Multi-view dataset handling: loading, validation, synthesis, splitting.
//!
//! A dataset holds one sample matrix per view (rows are samples) plus a
//! label vector per view. On construction, rows are regrouped so that each
//! view stores its samples class by class in one canonical class order
//! (first appearance in view 1's labels). All layout bookkeeping (the
//! per-class-per-view counts n_ij, class totals n_i, view totals n_j, and
//! the grand total n) lives in [`ViewLayout`] and is recomputed by every
//! operation that returns a dataset.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{self, stream};

/// Sample-count bookkeeping shared by every module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewLayout {
    /// Number of views (v).
    pub views: usize,
    /// Number of classes (c).
    pub classes: usize,
    /// Canonical label ordering shared by all views.
    pub class_order: Vec<String>,
    /// Per-class-per-view counts, indexed `[class][view]` (n_ij).
    pub per_class_view: Vec<Vec<usize>>,
    /// Per-class totals across views (n_i).
    pub per_class: Vec<usize>,
    /// Per-view totals (n_j).
    pub per_view: Vec<usize>,
    /// Grand total of samples across all views (n).
    pub total: usize,
}

impl ViewLayout {
    /// Build a layout from raw counts, recomputing the derived totals.
    pub fn from_counts(per_class_view: Vec<Vec<usize>>, class_order: Vec<String>) -> Result<Self> {
        let classes = per_class_view.len();
        if classes == 0 || classes != class_order.len() {
            return Err(Error::InvalidConfig(
                "class count must match class order and be nonzero".into(),
            ));
        }
        let views = per_class_view[0].len();
        if views == 0 || per_class_view.iter().any(|r| r.len() != views) {
            return Err(Error::InvalidConfig("ragged per-class-per-view counts".into()));
        }
        let per_class: Vec<usize> = per_class_view.iter().map(|r| r.iter().sum()).collect();
        if let Some(i) = per_class.iter().position(|&n| n == 0) {
            return Err(Error::EmptyClass { class: class_order[i].clone() });
        }
        let per_view: Vec<usize> =
            (0..views).map(|j| per_class_view.iter().map(|r| r[j]).sum()).collect();
        let total = per_view.iter().sum();
        Ok(ViewLayout { views, classes, class_order, per_class_view, per_class, per_view, total })
    }

    /// True iff all n_ij are equal.
    pub fn balanced(&self) -> bool {
        let first = self.per_class_view[0][0];
        self.per_class_view.iter().all(|r| r.iter().all(|&n| n == first))
    }

    /// Row ranges of each class inside view `j`, in canonical order.
    pub fn class_ranges(&self, view: usize) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::with_capacity(self.classes);
        let mut start = 0;
        for i in 0..self.classes {
            let len = self.per_class_view[i][view];
            out.push(start..start + len);
            start += len;
        }
        out
    }

    /// Class index of each row of view `j`.
    pub fn row_classes(&self, view: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.per_view[view]);
        for (i, range) in self.class_ranges(view).iter().enumerate() {
            out.extend(std::iter::repeat(i).take(range.len()));
        }
        out
    }

    /// (class, view) pairs with n_ij = 0, useful for load reporting.
    pub fn missing_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.classes {
            for j in 0..self.views {
                if self.per_class_view[i][j] == 0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    fn check_identities(&self) {
        debug_assert_eq!(self.total, self.per_view.iter().sum::<usize>());
        debug_assert_eq!(self.total, self.per_class.iter().sum::<usize>());
    }
}

/// Per-view sample matrices with aligned labels and layout bookkeeping.
///
/// Rows of view `j` are samples (n_j × d_j), grouped by class in the
/// canonical class order.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    pub views: Vec<DMatrix<f64>>,
    pub labels: Vec<Vec<String>>,
    pub layout: ViewLayout,
}

impl MultiViewDataset {
    /// Canonicalize raw per-view matrices and labels into a dataset.
    ///
    /// The class order is fixed by first appearance in view 1's labels;
    /// labels in later views must come from that set. Rows are regrouped
    /// by class with a stable sort, so within-class order is preserved.
    pub fn from_parts(views: Vec<DMatrix<f64>>, labels: Vec<Vec<String>>) -> Result<Self> {
        if views.is_empty() || views.len() != labels.len() {
            return Err(Error::InvalidConfig("need one label vector per view".into()));
        }
        for (j, (m, l)) in views.iter().zip(&labels).enumerate() {
            if m.nrows() != l.len() {
                return Err(Error::LabelCountMismatch { view: j, rows: m.nrows(), labels: l.len() });
            }
        }
        let mut class_order: Vec<String> = Vec::new();
        for lab in &labels[0] {
            if !class_order.contains(lab) {
                class_order.push(lab.clone());
            }
        }
        let class_index = |label: &String, view: usize| -> Result<usize> {
            class_order
                .iter()
                .position(|c| c == label)
                .ok_or_else(|| Error::UnknownClass { view, label: label.clone() })
        };

        let mut grouped_views = Vec::with_capacity(views.len());
        let mut grouped_labels = Vec::with_capacity(views.len());
        let mut counts = vec![vec![0usize; views.len()]; class_order.len()];
        for (j, (m, lab)) in views.into_iter().zip(labels).enumerate() {
            let mut order: Vec<usize> = (0..m.nrows()).collect();
            let idx: Vec<usize> =
                lab.iter().map(|l| class_index(l, j)).collect::<Result<Vec<_>>>()?;
            order.sort_by_key(|&r| idx[r]);
            let mut grouped = DMatrix::zeros(m.nrows(), m.ncols());
            let mut glab = Vec::with_capacity(lab.len());
            for (dst, &src) in order.iter().enumerate() {
                grouped.set_row(dst, &m.row(src));
                glab.push(lab[src].clone());
                counts[idx[src]][j] += 1;
            }
            grouped_views.push(grouped);
            grouped_labels.push(glab);
        }
        let layout = ViewLayout::from_counts(counts, class_order)?;
        layout.check_identities();
        Ok(MultiViewDataset { views: grouped_views, labels: grouped_labels, layout })
    }

    /// Per-view feature dimensionalities d_j.
    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(|m| m.ncols()).collect()
    }

    /// Rows of view `j` belonging to class `i`, as an owned matrix.
    pub fn class_rows(&self, view: usize, class: usize) -> DMatrix<f64> {
        let range = self.layout.class_ranges(view)[class].clone();
        self.views[view].rows(range.start, range.len()).into_owned()
    }
}

/// Configuration for the deterministic synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    pub classes: usize,
    pub views: usize,
    /// Samples per class per view.
    pub per_class: usize,
    /// Feature dimension of each view (length must equal `views`).
    pub dims: Vec<usize>,
    pub latent_dim: usize,
    /// Isotropic latent noise scale (0 collapses each class onto its center).
    pub noise: f64,
    /// Apply the fixed coordinatewise warp after each view's linear map.
    pub nonlinear: bool,
    pub seed: u64,
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 1 || self.views < 1 || self.per_class < 1 || self.latent_dim < 1 {
            return Err(Error::InvalidConfig("all counts must be >= 1".into()));
        }
        if self.dims.len() != self.views {
            return Err(Error::InvalidConfig("dims must list one dimension per view".into()));
        }
        if self.dims.iter().any(|&d| d < 1) {
            return Err(Error::InvalidConfig("view dimensions must be >= 1".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidConfig("noise must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// The 80-sample two-view benchmark used throughout the test suite
    /// for eigenspace perturbation runs (4 classes, 10 per class per view).
    pub fn standard_benchmark(seed: u64) -> Self {
        SynthesisConfig {
            classes: 4,
            views: 2,
            per_class: 10,
            dims: vec![6, 6],
            latent_dim: 3,
            noise: 0.3,
            nonlinear: false,
            seed,
        }
    }

    /// The warped ten-class benchmark used for kernel-vs-linear recognition
    /// comparisons: 10 classes, 6 per class per view, 4 observed dimensions
    /// per view, and the saturating warp on. The low view dimensionality
    /// starves linear projections of warped-coordinate basis functions
    /// while exact kernels keep their full nonparametric resolution.
    pub fn nonlinear_benchmark(seed: u64) -> Self {
        SynthesisConfig {
            classes: 10,
            views: 2,
            per_class: 6,
            dims: vec![4, 4],
            latent_dim: 8,
            noise: 0.08,
            nonlinear: true,
            seed,
        }
    }
}

/// Fixed coordinatewise warp used when `nonlinear` is set.
fn warp(t: f64) -> f64 {
    (2.0 * t).tanh()
}

/// Deterministic synthetic multi-view data.
///
/// Construction: draw `classes` latent centers from a standard normal,
/// one random linear map per view, then for each (view, class, sample)
/// a latent point `center + noise·ε` pushed through the view map (and the
/// warp when enabled). Classes share centers across views, so cross-view
/// signal exists by construction.
pub fn generate_synthetic(cfg: &SynthesisConfig) -> Result<MultiViewDataset> {
    generate_synthetic_with_latents(cfg).map(|(ds, _)| ds)
}

/// Same as [`generate_synthetic`], additionally returning the per-view
/// latent sample matrices (n_j × latent_dim) for oracle-style checks.
pub fn generate_synthetic_with_latents(
    cfg: &SynthesisConfig,
) -> Result<(MultiViewDataset, Vec<DMatrix<f64>>)> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, &[seeding::TAG_SYNTH_CENTERS]);
    let centers = DMatrix::from_fn(cfg.classes, cfg.latent_dim, |_, _| {
        rng.sample::<f64, _>(StandardNormal)
    });

    let maps: Vec<DMatrix<f64>> = (0..cfg.views)
        .map(|j| {
            let mut rng = stream(cfg.seed, &[seeding::TAG_SYNTH_MAP, j as u64]);
            let scale = 1.0 / (cfg.latent_dim as f64).sqrt();
            DMatrix::from_fn(cfg.dims[j], cfg.latent_dim, |_, _| {
                scale * rng.sample::<f64, _>(StandardNormal)
            })
        })
        .collect();

    let rows_per_view = cfg.classes * cfg.per_class;
    let mut views = Vec::with_capacity(cfg.views);
    let mut latents = Vec::with_capacity(cfg.views);
    let mut labels = Vec::with_capacity(cfg.views);
    for j in 0..cfg.views {
        let mut rng = stream(cfg.seed, &[seeding::TAG_SYNTH_LATENT, j as u64]);
        let mut z = DMatrix::zeros(rows_per_view, cfg.latent_dim);
        let mut lab = Vec::with_capacity(rows_per_view);
        for i in 0..cfg.classes {
            for k in 0..cfg.per_class {
                let row = i * cfg.per_class + k;
                for t in 0..cfg.latent_dim {
                    let eps: f64 = rng.sample(StandardNormal);
                    z[(row, t)] = centers[(i, t)] + cfg.noise * eps;
                }
                lab.push(class_name(i));
            }
        }
        let mut x = &z * maps[j].transpose();
        if cfg.nonlinear {
            x.apply(|t| *t = warp(*t));
        }
        views.push(x);
        latents.push(z);
        labels.push(lab);
    }
    let ds = MultiViewDataset::from_parts(views, labels)?;
    Ok((ds, latents))
}

fn class_name(i: usize) -> String {
    format!("c{i:03}")
}

/// Class-disjoint split: the first `train_classes` classes in canonical
/// order form the training set, the rest the test set.
pub fn split_by_class(
    ds: &MultiViewDataset,
    train_classes: usize,
) -> Result<(MultiViewDataset, MultiViewDataset)> {
    if train_classes < 1 || train_classes >= ds.layout.classes {
        return Err(Error::InvalidArgument(format!(
            "train_classes must be in [1, {}), got {train_classes}",
            ds.layout.classes
        )));
    }
    let take = |classes: std::ops::Range<usize>| -> Result<MultiViewDataset> {
        let mut views = Vec::with_capacity(ds.layout.views);
        let mut labels = Vec::with_capacity(ds.layout.views);
        for j in 0..ds.layout.views {
            let ranges = ds.layout.class_ranges(j);
            let start = ranges[classes.start].start;
            let end = ranges[classes.end - 1].end;
            views.push(ds.views[j].rows(start, end - start).into_owned());
            labels.push(ds.labels[j][start..end].to_vec());
        }
        MultiViewDataset::from_parts(views, labels)
    };
    let train = take(0..train_classes)?;
    let test = take(train_classes..ds.layout.classes)?;
    Ok((train, test))
}

/// JSON manifest listing the files of one dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub views: Vec<String>,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

/// Load the dataset described by a manifest, resolving relative paths
/// against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<MultiViewDataset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |p: &String| {
        let pb = Path::new(p);
        if pb.is_absolute() { pb.to_path_buf() } else { base.join(pb) }
    };
    let view_paths: Vec<_> = manifest.views.iter().map(resolve).collect();
    let label_paths: Vec<_> = manifest.labels.iter().map(resolve).collect();
    load_multiview(&view_paths, &label_paths)
}

/// Load per-view sample CSVs and label files into a canonicalized dataset.
pub fn load_multiview<P: AsRef<Path>>(view_paths: &[P], label_paths: &[P]) -> Result<MultiViewDataset> {
    if view_paths.is_empty() || view_paths.len() != label_paths.len() {
        return Err(Error::InvalidArgument(
            "need one label file per view file, at least one view".into(),
        ));
    }
    let mut views = Vec::with_capacity(view_paths.len());
    let mut labels = Vec::with_capacity(label_paths.len());
    for (vp, lp) in view_paths.iter().zip(label_paths) {
        views.push(read_matrix_csv(vp.as_ref())?);
        labels.push(read_labels(lp.as_ref())?);
    }
    MultiViewDataset::from_parts(views, labels)
}

/// Parse a headerless CSV of decimal floats. Lines starting with `#` are
/// treated as comments and skipped; row/col positions in errors are
/// 1-based file coordinates.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    let path_s = path.display().to_string();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (line_no, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for (c, field) in trimmed.split(',').enumerate() {
            let value: f64 = field.trim().parse().map_err(|e| Error::Parse {
                path: path_s.clone(),
                row: line_no + 1,
                col: c + 1,
                message: format!("{e}: {field:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::NonFinite { path: path_s.clone(), row: line_no + 1, col: c + 1 });
            }
            row.push(value);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    path: path_s,
                    row: line_no + 1,
                    col: row.len(),
                    message: format!("expected {w} fields, found {}", row.len()),
                })
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse { path: path_s, row: 0, col: 0, message: "empty file".into() });
    }
    let ncols = width.unwrap();
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

/// Read one label token per non-comment line.
pub fn read_labels(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect())
}

/// Write a matrix as headerless CSV with shortest-round-trip float
/// formatting, so a reload reproduces the exact f64 values. An optional
/// `#` comment line is emitted first.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>, comment: Option<&str>) -> Result<()> {
    let mut out = String::new();
    if let Some(c) = comment {
        writeln_str(&mut out, &format!("# {c}"));
    }
    for r in 0..m.nrows() {
        let mut line = String::new();
        for c in 0..m.ncols() {
            if c > 0 {
                line.push(',');
            }
            let _ = write!(line, "{}", m[(r, c)]);
        }
        writeln_str(&mut out, &line);
    }
    std::fs::write(path, out).map_err(|e| Error::Io { path: path.display().to_string(), source: e })
}

/// Write one label per line, with an optional leading `#` comment.
pub fn write_labels(path: &Path, labels: &[String], comment: Option<&str>) -> Result<()> {
    let mut out = String::new();
    if let Some(c) = comment {
        writeln_str(&mut out, &format!("# {c}"));
    }
    for l in labels {
        writeln_str(&mut out, l);
    }
    std::fs::write(path, out).map_err(|e| Error::Io { path: path.display().to_string(), source: e })
}

fn writeln_str(buf: &mut String, line: &str) {
    buf.push_str(line);
    buf.push('\n');
}

/// Mean of the rows of `m` as a column vector.
pub fn row_mean(m: &DMatrix<f64>) -> DVector<f64> {
    assert!(m.nrows() > 0);
    let mut mean = DVector::zeros(m.ncols());
    for r in 0..m.nrows() {
        mean += m.row(r).transpose();
    }
    mean / m.nrows() as f64
}

//! Kernels: exact linear and RBF Gram matrices, random Fourier feature
//! sampling, and the low-rank Gram estimator built from those features.
//!
//! The RBF kernel is k(x,y) = exp(−‖x−y‖²/2σ²). Its randomized feature map
//! draws frequencies w ~ N(0, σ⁻²I) and phases b ~ U[0, 2π), and embeds a
//! sample as √(2/m)·cos(Wx + b). The 1/√m scale is folded into the feature
//! rows so that the estimated Gram is a plain product ΦΦᵀ, which is an
//! unbiased estimator of the exact Gram entrywise.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{self, derive_seed, stream};

/// Kernel selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelSpec {
    Linear,
    Rbf {
        sigma: f64,
    },
    Rff {
        sigma: f64,
        m: usize,
        seed: u64,
        #[serde(default = "default_true")]
        normalize: bool,
    },
}

fn default_true() -> bool {
    true
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { sigma } | KernelSpec::Rff { sigma, .. } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::InvalidKernel(format!("sigma must be > 0, got {sigma}")));
                }
                if let KernelSpec::Rff { m, .. } = *self {
                    if m < 1 {
                        return Err(Error::InvalidKernel("feature count m must be >= 1".into()));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Rbf { .. } => "rbf",
            KernelSpec::Rff { .. } => "rff",
        }
    }
}

/// Sampled random Fourier map for one input dimension.
///
/// `w` is m × d with rows drawn i.i.d. from N(0, σ⁻²I); `b` holds m phases
/// uniform on [0, 2π). Regenerating from `(seed, input_dim, features, sigma)`
/// reproduces `w` and `b` exactly, so serialization stores only those four
/// numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct RffMap {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
    pub sigma: f64,
    pub seed: u64,
    pub input_dim: usize,
    pub features: usize,
}

/// The serialized form of an [`RffMap`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RffMapSpec {
    pub sigma: f64,
    pub seed: u64,
    pub input_dim: usize,
    pub features: usize,
}

impl RffMap {
    /// Draw a map: `features`·`input_dim` normal frequencies row by row,
    /// then `features` uniform phases, all from one seeded stream.
    pub fn sample(input_dim: usize, sigma: f64, features: usize, seed: u64) -> Result<Self> {
        if input_dim < 1 {
            return Err(Error::InvalidArgument("input_dim must be >= 1".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidKernel(format!("sigma must be > 0, got {sigma}")));
        }
        if features < 1 {
            return Err(Error::InvalidKernel("feature count m must be >= 1".into()));
        }
        let mut rng = stream(seed, &[seeding::TAG_RFF]);
        let std = 1.0 / sigma;
        let mut w = DMatrix::zeros(features, input_dim);
        for r in 0..features {
            for c in 0..input_dim {
                w[(r, c)] = std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let b = DVector::from_fn(features, |_, _| rng.gen::<f64>() * std::f64::consts::TAU);
        Ok(RffMap { w, b, sigma, seed, input_dim, features })
    }

    pub fn spec(&self) -> RffMapSpec {
        RffMapSpec {
            sigma: self.sigma,
            seed: self.seed,
            input_dim: self.input_dim,
            features: self.features,
        }
    }

    pub fn from_spec(spec: &RffMapSpec) -> Result<Self> {
        RffMap::sample(spec.input_dim, spec.sigma, spec.features, spec.seed)
    }
}

/// Per-view seed for independent maps drawn under one root seed.
pub fn view_seed(seed: u64, view: usize) -> u64 {
    derive_seed(seed, &[seeding::TAG_RFF, view as u64])
}

/// Sample the map for one view of an RFF kernel spec.
pub fn rff_sample_for_view(input_dim: usize, spec: &KernelSpec, view: usize) -> Result<RffMap> {
    match *spec {
        KernelSpec::Rff { sigma, m, seed, .. } => {
            RffMap::sample(input_dim, sigma, m, view_seed(seed, view))
        }
        _ => Err(Error::InvalidKernel("rff_sample requires an RFF kernel spec".into())),
    }
}

/// Embedded samples: row i is the feature vector of sample i.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub phi: DMatrix<f64>,
    pub normalized: bool,
}

impl FeatureMatrix {
    pub fn nrows(&self) -> usize {
        self.phi.nrows()
    }
}

/// Exact Gram matrix between the rows of `x` and `y` for a linear or RBF
/// kernel. RBF squared distances use the expanded form
/// ‖x‖² + ‖y‖² − 2xᵀy, clamped at zero to kill negative round-off.
pub fn gram(x: &DMatrix<f64>, y: &DMatrix<f64>, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "gram inputs have {} and {} columns",
            x.ncols(),
            y.ncols()
        )));
    }
    match *spec {
        KernelSpec::Linear => Ok(x * y.transpose()),
        KernelSpec::Rbf { sigma } => {
            let xx: Vec<f64> = (0..x.nrows()).map(|r| x.row(r).norm_squared()).collect();
            let yy: Vec<f64> = (0..y.nrows()).map(|r| y.row(r).norm_squared()).collect();
            let mut k = x * y.transpose();
            let inv = 1.0 / (2.0 * sigma * sigma);
            for r in 0..k.nrows() {
                for c in 0..k.ncols() {
                    let sq = (xx[r] + yy[c] - 2.0 * k[(r, c)]).max(0.0);
                    k[(r, c)] = (-sq * inv).exp();
                }
            }
            Ok(k)
        }
        KernelSpec::Rff { .. } => {
            Err(Error::InvalidKernel("gram computes exact kernels only; use rff_transform".into()))
        }
    }
}

/// Embed the rows of `x` through a sampled map. The unnormalized embedding
/// of row i is √(2/m)·cos(W xᵢ + b); with `normalize` each row is rescaled
/// to unit Euclidean norm.
pub fn rff_transform(x: &DMatrix<f64>, map: &RffMap, normalize: bool) -> Result<FeatureMatrix> {
    if x.ncols() != map.input_dim {
        return Err(Error::DimensionMismatch(format!(
            "samples have {} columns, map expects {}",
            x.ncols(),
            map.input_dim
        )));
    }
    let scale = (2.0 / map.features as f64).sqrt();
    let mut phi = x * map.w.transpose();
    for r in 0..phi.nrows() {
        for c in 0..phi.ncols() {
            phi[(r, c)] = scale * (phi[(r, c)] + map.b[c]).cos();
        }
        if normalize {
            let norm = phi.row(r).norm();
            if norm > 0.0 {
                for c in 0..phi.ncols() {
                    phi[(r, c)] /= norm;
                }
            }
        }
    }
    Ok(FeatureMatrix { phi, normalized: normalize })
}

/// Estimated Gram ΦΦᵀ: symmetric PSD by construction, rank at most m.
pub fn approx_gram(features: &FeatureMatrix) -> DMatrix<f64> {
    &features.phi * features.phi.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{numerical_rank, spectral_norm_sym};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn rbf_zero_distance_is_one() {
        let x = DMatrix::from_row_slice(1, 3, &[0.4, -1.0, 2.0]);
        let k = gram(&x, &x, &KernelSpec::Rbf { sigma: 0.7 }).unwrap();
        assert_eq!(k[(0, 0)], 1.0);
    }

    #[test]
    fn rbf_analytic_value() {
        // ‖x−y‖² = 2, σ = 1 → e⁻¹
        let x = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        let y = DMatrix::from_row_slice(1, 2, &[2f64.sqrt(), 0.0]);
        let k = gram(&x, &y, &KernelSpec::Rbf { sigma: 1.0 }).unwrap();
        assert!((k[(0, 0)] - (-1.0f64).exp()).abs() < 1e-12);
        assert!((k[(0, 0)] - 0.367879441).abs() < 1e-8);
    }

    #[test]
    fn linear_matches_dot_product_oracle() {
        let x = random_matrix(5, 4, 1);
        let k = gram(&x, &x, &KernelSpec::Linear).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let dot: f64 = (0..4).map(|t| x[(i, t)] * x[(j, t)]).sum();
                assert!((k[(i, j)] - dot).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gram_rejects_dimension_mismatch_and_bad_sigma() {
        let x = random_matrix(3, 4, 2);
        let y = random_matrix(3, 5, 3);
        assert!(gram(&x, &y, &KernelSpec::Linear).is_err());
        assert!(gram(&x, &x, &KernelSpec::Rbf { sigma: 0.0 }).is_err());
    }

    #[test]
    fn rff_map_is_reproducible() {
        let a = RffMap::sample(4, 1.5, 64, 9).unwrap();
        let b = RffMap::sample(4, 1.5, 64, 9).unwrap();
        assert_eq!(a, b);
        let c = RffMap::from_spec(&a.spec()).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn frequency_moments_match_target_distribution() {
        // Monte Carlo oracle with a CLT band: entries of W are N(0, 1/σ²).
        let sigma = 2.0;
        let m = 1 << 15;
        let d = 4;
        let map = RffMap::sample(d, sigma, m, 31).unwrap();
        let count = (m * d) as f64;
        let mean: f64 = map.w.iter().sum::<f64>() / count;
        assert!(
            mean.abs() < 4.0 * (1.0 / sigma) / count.sqrt(),
            "mean {mean} outside CLT band"
        );
        let var: f64 = map.w.iter().map(|&w| w * w).sum::<f64>() / count;
        let target = 1.0 / (sigma * sigma);
        assert!((var - target).abs() < 0.1 * target, "variance {var} vs {target}");
    }

    #[test]
    fn zero_map_gives_constant_features() {
        let m = 8;
        let map = RffMap {
            w: DMatrix::zeros(m, 3),
            b: DVector::zeros(m),
            sigma: 1.0,
            seed: 0,
            input_dim: 3,
            features: m,
        };
        let x = random_matrix(4, 3, 4);
        let phi = rff_transform(&x, &map, false).unwrap();
        let expected = (2.0 / m as f64).sqrt();
        for v in phi.phi.iter() {
            assert!((v - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn normalized_rows_have_unit_norm() {
        let map = RffMap::sample(5, 1.0, 33, 12).unwrap();
        let x = random_matrix(7, 5, 5);
        let phi = rff_transform(&x, &map, true).unwrap();
        for r in 0..7 {
            assert!((phi.phi.row(r).norm() - 1.0).abs() < 1e-12);
        }
        let raw = rff_transform(&x, &map, false).unwrap();
        let bound = (2.0 / 33.0f64).sqrt() + 1e-15;
        for v in raw.phi.iter() {
            assert!(v.abs() <= bound);
        }
    }

    #[test]
    fn unnormalized_product_tracks_exact_rbf() {
        let sigma = 1.0;
        let m = 1 << 14;
        let x = random_matrix(8, 6, 21);
        let map = RffMap::sample(6, sigma, m, 22).unwrap();
        let phi = rff_transform(&x, &map, false).unwrap();
        let k_hat = approx_gram(&phi);
        let k = gram(&x, &x, &KernelSpec::Rbf { sigma }).unwrap();
        let band = 3.0 * 2f64.sqrt() / (m as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let i = rng.gen_range(0..8);
            let j = rng.gen_range(0..8);
            assert!(
                (k_hat[(i, j)] - k[(i, j)]).abs() < band,
                "entry ({i},{j}): {} vs {}",
                k_hat[(i, j)],
                k[(i, j)]
            );
        }
    }

    #[test]
    fn orthonormal_feature_rows_give_identity() {
        let phi = FeatureMatrix { phi: DMatrix::identity(4, 6), normalized: true };
        let k = approx_gram(&phi);
        assert_eq!(k, DMatrix::identity(4, 4));
    }

    #[test]
    fn approx_gram_rank_bounded_by_feature_count() {
        let map = RffMap::sample(5, 1.0, 2, 3).unwrap();
        let x = random_matrix(6, 5, 6);
        let k_hat = approx_gram(&rff_transform(&x, &map, false).unwrap());
        assert!(numerical_rank(&k_hat, 1e-10) <= 2);
    }

    #[test]
    fn spectral_error_median_decreases_as_m_doubles() {
        let x = random_matrix(40, 6, 100);
        let k = gram(&x, &x, &KernelSpec::Rbf { sigma: 1.5 }).unwrap();
        let mut medians = Vec::new();
        for p in [6u32, 7, 8, 9, 10, 11, 12] {
            let m = 1usize << p;
            let mut errs = Vec::new();
            for trial in 0..30u64 {
                let map = RffMap::sample(6, 1.5, m, 1000 + 64 * trial + p as u64).unwrap();
                let k_hat = approx_gram(&rff_transform(&x, &map, false).unwrap());
                errs.push(spectral_norm_sym(&(&k_hat - &k)));
            }
            medians.push(crate::linalg::median(&errs));
        }
        for w in medians.windows(2) {
            assert!(w[1] < w[0], "medians not decreasing: {medians:?}");
        }
    }

    #[test]
    fn rbf_gram_is_psd_and_shift_invariant() {
        let x = random_matrix(12, 4, 8);
        let spec = KernelSpec::Rbf { sigma: 0.9 };
        let k = gram(&x, &x, &spec).unwrap();
        let eig = k.clone().symmetric_eigen();
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-8 * 12.0);

        let mut shifted = x.clone();
        for r in 0..shifted.nrows() {
            for c in 0..shifted.ncols() {
                shifted[(r, c)] += 3.25;
            }
        }
        let k2 = gram(&shifted, &shifted, &spec).unwrap();
        let max_diff = (&k2 - &k).iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        assert!(max_diff <= 1e-12, "shift changed RBF gram by {max_diff}");
    }

    #[test]
    fn per_view_seeds_are_independent() {
        let spec = KernelSpec::Rff { sigma: 1.0, m: 16, seed: 5, normalize: false };
        let a = rff_sample_for_view(3, &spec, 0).unwrap();
        let b = rff_sample_for_view(3, &spec, 1).unwrap();
        assert_ne!(a.w, b.w);
        let a2 = rff_sample_for_view(3, &spec, 0).unwrap();
        assert_eq!(a, a2);
    }
}

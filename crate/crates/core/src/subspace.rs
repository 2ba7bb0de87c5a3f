//! Eigenspace perturbation metrics and the concentration / sin Θ bound
//! evaluators, plus the end-to-end perturbation experiment that compares
//! exact-RBF and randomized-feature eigenspaces.
//!
//! Principal angles between column spans are computed two ways: cosines
//! from the singular values of B₁ᵀB₂ and sines from the singular values of
//! (I − B₁B₁ᵀ)B₂. The sine route stays accurate for nearly aligned
//! subspaces where cos θ rounds to 1. For equal dimensions the gap metric,
//! the spectral projector distance, and ‖sin Θ‖ coincide, and
//! ‖P₁ − P₂‖_F = √2‖sin Θ‖_F; both identities are asserted throughout the
//! test suite.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dataio::MultiViewDataset;
use crate::error::{Error, Result};
use crate::gep::{
    chordal_distance, crawford_estimate, default_epsilon, eigengap_delta, solve_regularized,
    CrawfordEstimate, EigenSolution,
};
use crate::kernels::{approx_gram, gram, rff_transform, KernelSpec, RffMap};
use crate::linalg::{median, spectral_norm_sym};
use crate::scatter::{build_kernel_scatter, build_structure, ScatterPair, StructureMatrices};
use crate::seeding::{self, derive_seed};

/// An n × l matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    b: DMatrix<f64>,
}

impl SubspaceBasis {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn ambient_dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn subspace_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Orthogonal projector BBᵀ onto the spanned subspace.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.b * self.b.transpose()
    }
}

/// Orthonormal basis of the column space of `z` via SVD.
///
/// Errors if the numerical rank (singular values above 1e-10·σ_max) falls
/// short of the column count, reporting how many columns are dependent.
pub fn orthonormalize(z: &DMatrix<f64>) -> Result<SubspaceBasis> {
    let l = z.ncols();
    if l == 0 || z.nrows() == 0 {
        return Err(Error::InvalidArgument("orthonormalize needs a nonempty matrix".into()));
    }
    let svd = z.clone().svd(true, false);
    let sigma = &svd.singular_values;
    let max = sigma.iter().fold(0.0f64, |a, &s| a.max(s));
    let rank = sigma.iter().filter(|&&s| s > 1e-10 * max).count();
    if max == 0.0 || rank < l {
        return Err(Error::RankDeficient { deficient: l - rank });
    }
    let u = svd.u.expect("requested U");
    Ok(SubspaceBasis { b: u.columns(0, l).into_owned() })
}

/// Canonical angles between two spans of equal dimension.
#[derive(Debug, Clone, Serialize)]
pub struct PrincipalAngles {
    /// θ_1 ≤ … ≤ θ_l in radians.
    pub angles: Vec<f64>,
    /// max_k sin θ_k.
    pub sin_spectral: f64,
    /// (Σ_k sin²θ_k)^{1/2}.
    pub sin_frobenius: f64,
}

pub fn principal_angles(b1: &SubspaceBasis, b2: &SubspaceBasis) -> Result<PrincipalAngles> {
    if b1.ambient_dim() != b2.ambient_dim() || b1.subspace_dim() != b2.subspace_dim() {
        return Err(Error::DimensionMismatch(format!(
            "principal angles need equal shapes, got {}x{} vs {}x{}",
            b1.ambient_dim(),
            b1.subspace_dim(),
            b2.ambient_dim(),
            b2.subspace_dim()
        )));
    }
    let l = b1.subspace_dim();
    let mut cosines: Vec<f64> = (b1.matrix().transpose() * b2.matrix())
        .svd(false, false)
        .singular_values
        .iter()
        .map(|&s| s.clamp(0.0, 1.0))
        .collect();
    cosines.sort_by(|a, b| b.partial_cmp(a).unwrap());
    // sines from the complementary projector: singular values of (I−P₁)B₂
    let residual = b2.matrix() - b1.matrix() * (b1.matrix().transpose() * b2.matrix());
    let mut sines: Vec<f64> = residual
        .svd(false, false)
        .singular_values
        .iter()
        .map(|&s| s.clamp(0.0, 1.0))
        .collect();
    sines.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let angles: Vec<f64> = (0..l).map(|k| sines[k].atan2(cosines[k])).collect();
    let sin_spectral = sines[l - 1];
    let sin_frobenius = sines.iter().map(|s| s * s).sum::<f64>().sqrt();
    Ok(PrincipalAngles { angles, sin_spectral, sin_frobenius })
}

/// Gap metric between subspaces: spectral norm of the projector
/// difference. Dimensions may differ; the gap is then computed from the
/// projectors alone (and is at least |l₁ − l₂| ≥ 1 apart in rank).
pub fn gap_metric(b1: &SubspaceBasis, b2: &SubspaceBasis) -> Result<f64> {
    if b1.ambient_dim() != b2.ambient_dim() {
        return Err(Error::DimensionMismatch("gap metric needs equal ambient dimension".into()));
    }
    let diff = b1.projector() - b2.projector();
    Ok(spectral_norm_sym(&diff))
}

/// Spectral and Frobenius distances between the orthogonal projectors.
pub fn projector_distances(b1: &SubspaceBasis, b2: &SubspaceBasis) -> Result<(f64, f64)> {
    if b1.ambient_dim() != b2.ambient_dim() {
        return Err(Error::DimensionMismatch(
            "projector distance needs equal ambient dimension".into(),
        ));
    }
    let diff = b1.projector() - b2.projector();
    Ok((spectral_norm_sym(&diff), diff.norm()))
}

/// Concentration bound on ‖K̂ − K‖ for one Gram matrix estimated from m
/// random features: with probability 1−η,
///
/// ```text
/// ‖K̂−K‖ ≤ 2n·log(2n/η)/(3m) + √(4n²·log²(2n/η) + 18mn‖K‖·log(2n/η))/(3m)
/// ```
pub fn gram_concentration_bound(n: usize, m: usize, eta: f64, k_norm: f64) -> Result<f64> {
    check_bound_args(n, m, eta, k_norm)?;
    let n = n as f64;
    let m = m as f64;
    let log_term = (2.0 * n / eta).ln();
    let t1 = 2.0 * n * log_term / (3.0 * m);
    let t2 = (4.0 * n * n * log_term * log_term + 18.0 * m * n * k_norm * log_term).sqrt()
        / (3.0 * m);
    Ok(t1 + t2)
}

/// Union-corrected per-view concentration value ξ_η: the failure budget η
/// is split across v views by replacing η with 1 − (1−η)^{1/v} inside the
/// logarithms, and sample counts become the per-view ñ = n/v.
pub fn per_view_concentration_bound(
    n_total: usize,
    views: usize,
    m: usize,
    eta: f64,
    k_star_norm: f64,
) -> Result<f64> {
    check_bound_args(n_total, m, eta, k_star_norm)?;
    if views < 1 {
        return Err(Error::InvalidArgument("views must be >= 1".into()));
    }
    let n = n_total as f64;
    let v = views as f64;
    let m = m as f64;
    let p = 1.0 - (1.0 - eta).powf(1.0 / v);
    let log_per_view = (2.0 * n / v / p).ln();
    let log_full = (2.0 * n / p).ln();
    let t1 = 2.0 * n * log_per_view / (3.0 * v * m);
    let t2 = (4.0 * (n / v) * (n / v) * log_full * log_full
        + 18.0 / v * m * n * k_star_norm * log_per_view)
        .sqrt()
        / (3.0 * m);
    Ok(t1 + t2)
}

fn check_bound_args(n: usize, m: usize, eta: f64, k_norm: f64) -> Result<()> {
    if n < 1 || m < 1 {
        return Err(Error::InvalidArgument("n and m must be >= 1".into()));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidArgument(format!("eta must lie in (0,1), got {eta}")));
    }
    if !(k_norm > 0.0 && k_norm.is_finite()) {
        return Err(Error::InvalidArgument("kernel norm must be positive".into()));
    }
    Ok(())
}

/// An evaluated sin Θ bound. Values above 1 carry no information (sin Θ
/// never exceeds 1) and are flagged vacuous rather than clamped.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BoundReport {
    Applicable { value: f64, vacuous: bool },
    Inapplicable { reason: String },
}

impl BoundReport {
    fn from_value(value: f64) -> Self {
        BoundReport::Applicable { value, vacuous: value > 1.0 }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            BoundReport::Applicable { value, .. } => Some(*value),
            BoundReport::Inapplicable { .. } => None,
        }
    }

    /// True only for an applicable bound with value ≤ 1.
    pub fn informative(&self) -> bool {
        matches!(self, BoundReport::Applicable { vacuous: false, .. })
    }
}

/// Angular weight q(γ): 2 when γ = 0, 2√2 otherwise.
pub fn angular_weight(gamma: f64) -> f64 {
    if gamma == 0.0 {
        2.0
    } else {
        2.0 * 2f64.sqrt()
    }
}

/// Separation coefficient
/// p(α,δ,γ) = q(γ)·[(α+δ)√(1−α²) + α√(1−(α+δ)²)] / (2α+δ).
pub fn separation_coefficient(alpha: f64, delta: f64, gamma: f64) -> f64 {
    let ad = alpha + delta;
    angular_weight(gamma) * (ad * (1.0 - alpha * alpha).sqrt() + alpha * (1.0 - ad * ad).sqrt())
        / (2.0 * alpha + delta)
}

/// General sin Θ bound for a definite pencil pair under a chordal
/// separation certificate (α, δ, γ):
///
/// ```text
/// ‖sin Θ‖ ≤ p(α,δ,γ)·‖K*‖²·ξ / (𝓒(D,S)·𝓒(D̂,Ŝ)) · (‖K*‖+‖K̂*‖)/δ
/// ```
pub fn definite_pair_bound(
    alpha: f64,
    delta: f64,
    gamma: f64,
    crawford_exact: f64,
    crawford_approx: f64,
    k_star: f64,
    k_hat_star: f64,
    xi: f64,
) -> Result<BoundReport> {
    if !(alpha >= 0.0) || !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need alpha >= 0 and delta > 0, got alpha={alpha}, delta={delta}"
        )));
    }
    if alpha + delta > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "separation certificate needs alpha + delta <= 1, got {}",
            alpha + delta
        )));
    }
    if crawford_exact <= 0.0 || crawford_approx <= 0.0 {
        return Ok(BoundReport::Inapplicable {
            reason: "pair not certified definite".into(),
        });
    }
    let p = separation_coefficient(alpha, delta, gamma);
    let value =
        p * k_star * k_star * xi / (crawford_exact * crawford_approx) * (k_star + k_hat_star)
            / delta;
    Ok(BoundReport::from_value(value))
}

/// Scaling constant (1+√5)/2 of the regularized bound's ε⁻² term.
pub const REGULARIZED_BOUND_C: f64 = 1.618_033_988_749_895;

/// The two additive components of the regularized bound, already scaled by
/// ξ/δ: the ε⁻² curvature term and the ε⁻¹ linear term.
pub fn regularized_bound_terms(
    xi: f64,
    epsilon: f64,
    k_star: f64,
    k_hat_star: f64,
    delta: f64,
) -> Result<(f64, f64)> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be > 0, got {delta}")));
    }
    let sum = k_star + k_hat_star;
    let first = xi / delta * REGULARIZED_BOUND_C * k_star * k_star * sum / (epsilon * epsilon);
    let second = xi / delta * sum / epsilon;
    Ok((first, second))
}

/// Regularized-pencil sin Θ bound:
///
/// ```text
/// ‖sin Θ‖ ≤ (ξ/δ)·{ C‖K*‖²(‖K*‖+‖K̂*‖)/ε² + (‖K*‖+‖K̂*‖)/ε },  C = (1+√5)/2
/// ```
///
/// with δ the eigengap λ_l − λ̂_{l+1}; a non-positive δ makes the bound
/// inapplicable.
pub fn regularized_pair_bound(
    xi: f64,
    epsilon: f64,
    k_star: f64,
    k_hat_star: f64,
    delta: f64,
) -> Result<BoundReport> {
    if delta <= 0.0 {
        return Ok(BoundReport::Inapplicable { reason: "eigengap not positive".into() });
    }
    let (first, second) = regularized_bound_terms(xi, epsilon, k_star, k_hat_star, delta)?;
    Ok(BoundReport::from_value(first + second))
}

/// A chordal separation certificate for eigenvalue sets: every retained
/// exact eigenvalue lies within chordal distance α of the reference ray
/// (γ,1), and every discarded approximate eigenvalue at least α+δ away.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationReport {
    pub alpha: f64,
    pub delta: f64,
    pub gamma: f64,
    pub feasible: bool,
}

/// Search a 257-point γ grid (plus γ = 0) spanning the eigenvalue range
/// for the certificate maximizing δ subject to α + δ ≤ 1.
pub fn separation_report(
    exact_vals: &[f64],
    approx_vals: &[f64],
    l: usize,
) -> Result<SeparationReport> {
    if l < 1 || l > exact_vals.len() || l >= approx_vals.len() {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= l <= {} and l < {}, got {l}",
            exact_vals.len(),
            approx_vals.len()
        )));
    }
    for vals in [exact_vals, approx_vals] {
        if vals.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument("eigenvalue lists must be sorted descending".into()));
        }
    }
    let head = &exact_vals[..l];
    let tail = &approx_vals[l..];
    let all = head.iter().chain(tail.iter());
    let lo = all.clone().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = all.cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let mut gammas: Vec<f64> = (0..257).map(|i| lo + (hi - lo) * i as f64 / 256.0).collect();
    gammas.push(0.0);

    let rho = |lambda: f64, gamma: f64| chordal_distance((lambda, 1.0), (gamma, 1.0)).unwrap();
    let mut best = SeparationReport { alpha: 0.0, delta: f64::NEG_INFINITY, gamma: 0.0, feasible: false };
    for gamma in gammas {
        let alpha = head.iter().map(|&x| rho(x, gamma)).fold(0.0f64, f64::max);
        let tail_min = tail.iter().map(|&x| rho(x, gamma)).fold(f64::INFINITY, f64::min);
        let delta = (tail_min - alpha).min(1.0 - alpha);
        if delta > best.delta {
            best = SeparationReport { alpha, delta, gamma, feasible: delta > 0.0 };
        }
    }
    if !best.feasible {
        best.delta = best.delta.max(0.0);
    }
    Ok(best)
}

/// Parameters of a perturbation experiment run.
#[derive(Debug, Clone, Serialize)]
pub struct PerturbationConfig {
    pub sigma: f64,
    /// None resolves to the trace-scaled default for the exact pair.
    pub epsilon: Option<f64>,
    pub l: usize,
    pub m_grid: Vec<usize>,
    pub trials: usize,
    pub eta: f64,
    pub seed: u64,
    pub crawford_restarts: usize,
}

impl PerturbationConfig {
    pub fn new(sigma: f64, l: usize, m_grid: Vec<usize>, trials: usize, eta: f64, seed: u64) -> Self {
        PerturbationConfig {
            sigma,
            epsilon: None,
            l,
            m_grid,
            trials,
            eta,
            seed,
            crawford_restarts: 12,
        }
    }
}

/// Everything computed once per dataset for an experiment: the exact-RBF
/// pipeline and its definiteness estimates.
pub struct ExperimentStage {
    pub config: PerturbationConfig,
    pub dataset: MultiViewDataset,
    pub structure: StructureMatrices,
    pub exact_pair: ScatterPair,
    pub exact_solution: EigenSolution,
    pub exact_basis: SubspaceBasis,
    pub epsilon: f64,
    pub k_star: f64,
    pub crawford_exact: CrawfordEstimate,
    pub crawford_exact_reg: CrawfordEstimate,
}

/// One row of experiment output: empirical subspace metrics next to every
/// applicable theoretical bound.
#[derive(Debug, Clone, Serialize)]
pub struct PerturbationReport {
    pub m: usize,
    pub trial: usize,
    pub sin_theta_sp: f64,
    pub sin_theta_fro: f64,
    pub gap: f64,
    pub proj_dist_sp: f64,
    pub proj_dist_fro: f64,
    /// Eigengap λ_l − λ̂_{l+1} of the regularized solves.
    pub delta: f64,
    pub xi: f64,
    pub bound_thm3: BoundReport,
    pub bound_thm2: BoundReport,
    pub crawford_exact: f64,
    pub crawford_approx: f64,
    /// Same estimates with the regularizer folded into the second matrix.
    pub crawford_exact_reg: f64,
    pub crawford_approx_reg: f64,
    pub k_star: f64,
    pub k_hat_star: f64,
    pub separation: SeparationReport,
    pub eta: f64,
    pub seed: u64,
}

impl PerturbationReport {
    /// Documented flat-CSV column schema, one row per (m, trial).
    pub fn csv_header() -> &'static str {
        "m,trial,sin_theta_sp,sin_theta_fro,gap,delta,xi,bound_thm3,bound_thm2,\
         crawford_exact,crawford_approx,vacuous_flags,proj_dist_sp,proj_dist_fro,\
         crawford_exact_reg,crawford_approx_reg,alpha,gamma,delta_sep,feasible,\
         k_star,k_hat_star,eta,seed"
    }

    pub fn csv_row(&self) -> String {
        let bound_cell = |b: &BoundReport| match b {
            BoundReport::Applicable { value, .. } => format!("{value}"),
            BoundReport::Inapplicable { .. } => String::new(),
        };
        let flag = |name: &str, b: &BoundReport| match b {
            BoundReport::Applicable { vacuous: true, .. } => format!("{name}=v"),
            BoundReport::Applicable { vacuous: false, .. } => format!("{name}=ok"),
            BoundReport::Inapplicable { .. } => format!("{name}=na"),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.m,
            self.trial,
            self.sin_theta_sp,
            self.sin_theta_fro,
            self.gap,
            self.delta,
            self.xi,
            bound_cell(&self.bound_thm3),
            bound_cell(&self.bound_thm2),
            self.crawford_exact,
            self.crawford_approx,
            format!("{};{}", flag("thm3", &self.bound_thm3), flag("thm2", &self.bound_thm2)),
            self.proj_dist_sp,
            self.proj_dist_fro,
            self.crawford_exact_reg,
            self.crawford_approx_reg,
            self.separation.alpha,
            self.separation.gamma,
            self.separation.delta,
            self.separation.feasible,
            self.k_star,
            self.k_hat_star,
            self.eta,
            self.seed
        )
    }
}

/// Aggregate of the reports sharing one m.
#[derive(Debug, Clone, Serialize)]
pub struct PerturbationSummary {
    pub m: usize,
    pub trials: usize,
    pub median_sin_theta_sp: f64,
    pub median_sin_theta_fro: f64,
    pub median_delta: f64,
    pub median_xi: f64,
    /// Trials whose regularized bound is applicable and ≤ 1.
    pub thm3_informative: usize,
    pub thm3_vacuous: usize,
    pub thm3_inapplicable: usize,
    /// Informative regularized bounds that fail to cover the empirical
    /// sin Θ.
    pub thm3_violations: usize,
}

pub fn summarize_by_m(reports: &[PerturbationReport]) -> Vec<PerturbationSummary> {
    let mut ms: Vec<usize> = reports.iter().map(|r| r.m).collect();
    ms.sort_unstable();
    ms.dedup();
    ms.iter()
        .map(|&m| {
            let rows: Vec<&PerturbationReport> = reports.iter().filter(|r| r.m == m).collect();
            let collect = |f: fn(&PerturbationReport) -> f64| -> Vec<f64> {
                rows.iter().map(|r| f(r)).collect()
            };
            let mut informative = 0;
            let mut vacuous = 0;
            let mut inapplicable = 0;
            let mut violations = 0;
            for r in &rows {
                match &r.bound_thm3 {
                    BoundReport::Applicable { value, vacuous: false } => {
                        informative += 1;
                        if *value < r.sin_theta_sp {
                            violations += 1;
                        }
                    }
                    BoundReport::Applicable { vacuous: true, .. } => vacuous += 1,
                    BoundReport::Inapplicable { .. } => inapplicable += 1,
                }
            }
            PerturbationSummary {
                m,
                trials: rows.len(),
                median_sin_theta_sp: median(&collect(|r| r.sin_theta_sp)),
                median_sin_theta_fro: median(&collect(|r| r.sin_theta_fro)),
                median_delta: median(&collect(|r| r.delta)),
                median_xi: median(&collect(|r| r.xi)),
                thm3_informative: informative,
                thm3_vacuous: vacuous,
                thm3_inapplicable: inapplicable,
                thm3_violations: violations,
            }
        })
        .collect()
}

/// Run the exact-RBF pipeline once: Gram blocks, scatter pair, regularized
/// solve, retained basis, and definiteness estimates.
pub fn experiment_stage(ds: &MultiViewDataset, config: &PerturbationConfig) -> Result<ExperimentStage> {
    if config.m_grid.is_empty() || config.trials == 0 {
        return Err(Error::InvalidArgument("m grid and trial count must be nonempty".into()));
    }
    let spec = KernelSpec::Rbf { sigma: config.sigma };
    let k_blocks: Vec<DMatrix<f64>> =
        ds.views.iter().map(|x| gram(x, x, &spec)).collect::<Result<_>>()?;
    let k_star = k_blocks.iter().map(spectral_norm_sym).fold(0.0f64, f64::max);
    let structure = build_structure(&ds.layout)?;
    let exact_pair = build_kernel_scatter(&k_blocks, &structure)?;
    let epsilon = config.epsilon.unwrap_or_else(|| default_epsilon(&exact_pair.s));
    let exact_solution = solve_regularized(&exact_pair, epsilon, config.l)?;
    let exact_basis = orthonormalize(&exact_solution.top_columns())?;
    let crawford_seed = derive_seed(config.seed, &[seeding::TAG_CRAWFORD, 0]);
    let crawford_exact = crawford_estimate(
        &exact_pair.d,
        &exact_pair.s,
        config.crawford_restarts,
        1e-10,
        crawford_seed,
    )?;
    let mut s_reg = exact_pair.s.clone();
    for i in 0..s_reg.nrows() {
        s_reg[(i, i)] += epsilon;
    }
    let crawford_exact_reg = crawford_estimate(
        &exact_pair.d,
        &s_reg,
        config.crawford_restarts,
        1e-10,
        crawford_seed,
    )?;
    Ok(ExperimentStage {
        config: config.clone(),
        dataset: ds.clone(),
        structure,
        exact_pair,
        exact_solution,
        exact_basis,
        epsilon,
        k_star,
        crawford_exact,
        crawford_exact_reg,
    })
}

/// Derived seed of one (m, trial) cell.
pub fn trial_seed(config: &PerturbationConfig, m_index: usize, trial: usize) -> u64 {
    derive_seed(config.seed, &[seeding::TAG_PERTURB_TRIAL, m_index as u64, trial as u64])
}

/// One trial at feature count `m`: sample unnormalized per-view feature
/// maps, estimate the Gram blocks, and compare eigenspaces against the
/// staged exact pipeline.
pub fn run_trial(stage: &ExperimentStage, m_index: usize, trial: usize) -> Result<PerturbationReport> {
    let config = &stage.config;
    let m = config.m_grid[m_index];
    let seed = trial_seed(config, m_index, trial);
    let ds = &stage.dataset;
    let mut k_hat_blocks = Vec::with_capacity(ds.layout.views);
    for (j, x) in ds.views.iter().enumerate() {
        let map = RffMap::sample(x.ncols(), config.sigma, m, derive_seed(seed, &[j as u64]))?;
        let phi = rff_transform(x, &map, false)?;
        k_hat_blocks.push(approx_gram(&phi));
    }
    run_trial_with_blocks(stage, &k_hat_blocks, m, trial, seed)
}

/// Trial body with externally supplied approximate Gram blocks. Feeding
/// the exact blocks here must produce zero distances, which the tests use
/// as a self-comparison check.
pub fn run_trial_with_blocks(
    stage: &ExperimentStage,
    k_hat_blocks: &[DMatrix<f64>],
    m: usize,
    trial: usize,
    seed: u64,
) -> Result<PerturbationReport> {
    let config = &stage.config;
    let l = config.l;
    let approx_pair = build_kernel_scatter(k_hat_blocks, &stage.structure)?;
    let approx_solution = solve_regularized(&approx_pair, stage.epsilon, l)?;
    let approx_basis = orthonormalize(&approx_solution.top_columns())?;

    let angles = principal_angles(&stage.exact_basis, &approx_basis)?;
    let gap = gap_metric(&stage.exact_basis, &approx_basis)?;
    let (proj_sp, proj_fro) = projector_distances(&stage.exact_basis, &approx_basis)?;
    let delta = eigengap_delta(&stage.exact_solution, &approx_solution, l)?;

    let k_hat_star = k_hat_blocks.iter().map(spectral_norm_sym).fold(0.0f64, f64::max);
    let xi = per_view_concentration_bound(
        stage.dataset.layout.total,
        stage.dataset.layout.views,
        m,
        config.eta,
        stage.k_star,
    )?;
    let bound_thm3 =
        regularized_pair_bound(xi, stage.epsilon, stage.k_star, k_hat_star, delta)?;

    let exact_vals: Vec<f64> = stage.exact_solution.eigenvalues.iter().cloned().collect();
    let approx_vals: Vec<f64> = approx_solution.eigenvalues.iter().cloned().collect();
    let separation = separation_report(&exact_vals, &approx_vals, l)?;

    let crawford_seed = derive_seed(seed, &[seeding::TAG_CRAWFORD]);
    let crawford_approx = crawford_estimate(
        &approx_pair.d,
        &approx_pair.s,
        config.crawford_restarts,
        1e-10,
        crawford_seed,
    )?;
    let mut s_reg = approx_pair.s.clone();
    for i in 0..s_reg.nrows() {
        s_reg[(i, i)] += stage.epsilon;
    }
    let crawford_approx_reg = crawford_estimate(
        &approx_pair.d,
        &s_reg,
        config.crawford_restarts,
        1e-10,
        crawford_seed,
    )?;

    let bound_thm2 = if separation.feasible {
        definite_pair_bound(
            separation.alpha,
            separation.delta,
            separation.gamma,
            if stage.crawford_exact.definite { stage.crawford_exact.value } else { 0.0 },
            if crawford_approx.definite { crawford_approx.value } else { 0.0 },
            stage.k_star,
            k_hat_star,
            xi,
        )?
    } else {
        BoundReport::Inapplicable { reason: "no separation certificate found".into() }
    };

    Ok(PerturbationReport {
        m,
        trial,
        sin_theta_sp: angles.sin_spectral,
        sin_theta_fro: angles.sin_frobenius,
        gap,
        proj_dist_sp: proj_sp,
        proj_dist_fro: proj_fro,
        delta,
        xi,
        bound_thm3,
        bound_thm2,
        crawford_exact: stage.crawford_exact.value,
        crawford_approx: crawford_approx.value,
        crawford_exact_reg: stage.crawford_exact_reg.value,
        crawford_approx_reg: crawford_approx_reg.value,
        k_star: stage.k_star,
        k_hat_star,
        separation,
        eta: config.eta,
        seed,
    })
}

/// Full experiment: exact stage once, then every (m, trial) cell in grid
/// order. Cells are independent given their derived seeds, so callers may
/// parallelize over them and still reproduce this exact output.
pub fn perturbation_experiment(
    ds: &MultiViewDataset,
    config: &PerturbationConfig,
) -> Result<Vec<PerturbationReport>> {
    let stage = experiment_stage(ds, config)?;
    let mut reports = Vec::with_capacity(config.m_grid.len() * config.trials);
    for m_index in 0..config.m_grid.len() {
        for trial in 0..config.trials {
            reports.push(run_trial(&stage, m_index, trial)?);
        }
    }
    Ok(reports)
}

//! Multi-view discriminant analysis with linear, RBF, and randomized
//! Fourier-feature kernels.
//!
//! The crate learns one projection per view into a shared discriminant
//! space by solving the regularized pencil D z = λ(S+εI) z built from
//! between-class and within-class scatter, either on raw features or
//! through per-view Gram matrices. Random Fourier features replace exact
//! RBF Grams with low-rank unbiased estimates, and the [`subspace`] module
//! quantifies how much the learned eigenspace moves under that
//! approximation, next to evaluable concentration and sin Θ bounds.
//!
//! Module map:
//!
//! - [`dataio`]: dataset loading, validation, synthesis, class splits
//! - [`kernels`]: exact Grams, feature maps, the ΦΦᵀ estimator
//! - [`scatter`]: structure matrices and scatter pairs in both spaces
//! - [`gep`]: the whitened regularized eigensolver and pencil utilities
//! - [`subspace`]: principal angles, gap metric, bounds, experiments
//! - [`model`]: fit / project / classify and parameter sweeps

pub mod dataio;
pub mod error;
pub mod gep;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod scatter;
pub mod seeding;
pub mod subspace;

pub use error::{Error, Result};

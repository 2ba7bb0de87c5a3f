//! Run configuration: one JSON file plus flag overrides, hashed into every
//! output artifact so experiment records stay replayable.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mvda_kit::dataio::SynthesisConfig;
use mvda_kit::kernels::KernelSpec;
use mvda_kit::model::{ModelMode, SweepKernel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Everything a command run may need. Unknown keys in the JSON file are
/// rejected. Fields that do not affect outputs (`out`, `threads`) are
/// excluded from the config hash.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub threads: usize,

    /// Dataset source: a manifest on disk, or a synthesis recipe.
    pub manifest: Option<PathBuf>,
    pub synthesis: Option<SynthesisConfig>,
    /// Class-disjoint split: first `train_classes` classes train, the rest
    /// evaluate.
    pub train_classes: Option<usize>,

    pub kernel: Option<KernelSpec>,
    pub epsilon: Option<f64>,
    pub l: Option<usize>,
    pub mode: Option<ModelMode>,

    pub kinds: Vec<SweepKernel>,
    pub sigma_grid: Vec<f64>,
    pub l_grid: Vec<usize>,
    pub m_grid: Vec<usize>,
    pub trials: usize,
    pub eta: f64,
    pub sigma: Option<f64>,
    pub m: Option<usize>,
    pub rff_normalize: Option<bool>,
    pub crawford_restarts: usize,

    /// For `eval`: where the fitted model lives.
    pub model: Option<PathBuf>,
    pub probe_view: Option<usize>,
    pub gallery_view: Option<usize>,
}

/// Flag values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub sigma: Option<f64>,
    pub m: Option<usize>,
    pub l: Option<usize>,
    pub epsilon: Option<f64>,
    pub eta: Option<f64>,
    pub trials: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if config.trials == 0 {
            config.trials = 10;
        }
        if config.eta == 0.0 {
            config.eta = 0.1;
        }
        if config.crawford_restarts == 0 {
            config.crawford_restarts = 12;
        }
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(out) = &overrides.out {
            config.out = Some(out.clone());
        }
        if let Some(threads) = overrides.threads {
            config.threads = threads;
        } else if config.threads == 0 {
            if let Ok(v) = std::env::var("MVDA_KIT_THREADS") {
                config.threads = v
                    .parse()
                    .with_context(|| format!("MVDA_KIT_THREADS must be an integer, got {v:?}"))?;
            }
        }
        if let Some(sigma) = overrides.sigma {
            config.sigma = Some(sigma);
            if let Some(KernelSpec::Rbf { sigma: s }) = &mut config.kernel {
                *s = sigma;
            }
            if let Some(KernelSpec::Rff { sigma: s, .. }) = &mut config.kernel {
                *s = sigma;
            }
        }
        if let Some(m) = overrides.m {
            config.m = Some(m);
            if let Some(KernelSpec::Rff { m: km, .. }) = &mut config.kernel {
                *km = m;
            }
        }
        if let Some(l) = overrides.l {
            config.l = Some(l);
        }
        if let Some(epsilon) = overrides.epsilon {
            config.epsilon = Some(epsilon);
        }
        if let Some(eta) = overrides.eta {
            config.eta = eta;
        }
        if let Some(trials) = overrides.trials {
            config.trials = trials;
        }
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if let Some(s) = &self.synthesis {
            s.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        }
        if let Some(k) = &self.kernel {
            k.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            bail!("eta must lie in (0,1), got {}", self.eta);
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0) {
                bail!("epsilon must be > 0, got {e}");
            }
        }
        Ok(())
    }

    /// Hex digest of the effective experiment configuration, independent of
    /// `out` and `threads` so reruns on different machines match.
    pub fn hash(&self) -> String {
        let mut hashed = self.clone();
        hashed.out = None;
        hashed.threads = 0;
        let canonical = serde_json::to_string(&hashed).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hex[..16].to_string()
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out.as_deref().context("an output directory is required (--out or \"out\" in config)")
    }
}

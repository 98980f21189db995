//! The run config document: one JSON file binding every module's settings.
//! Flags override file values; the merged result is archived in manifests.

use std::path::Path;

use serde::{Deserialize, Serialize};

use cate_core::eval::{default_noise_grid, default_perturbation_grid, DEFAULT_EVAL_NOISE_SCALE};
use cate_core::model::{MiningConfig, TrainConfig};
use cate_core::scm::{Provenance, ScmParams};
use cate_core::{Error, Result};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scm: ScmParams,
    pub train: TrainSection,
    pub sweep: SweepSection,
    pub eval: EvalSection,
    pub augment: AugmentSection,
}

/// Fields left out fall through to `TrainConfig::default()` plus the
/// provenance-based weight/margin defaults, so the file only needs to name
/// what it changes.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub huber_delta: Option<f64>,
    pub contrastive_weight: Option<f64>,
    pub margin: Option<f64>,
    pub mining: Option<MiningConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub y_noise_grid: Vec<f64>,
    pub noncausal_noise_grid: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            y_noise_grid: default_noise_grid(),
            noncausal_noise_grid: default_perturbation_grid(),
            seeds: (0..10).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Scale of the non-causal perturbation behind the synthetic CATE pairs.
    pub noise_scale: f64,
    /// Seeds trained and aggregated when `eval` is not given a snapshot.
    pub seeds: Vec<u64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { noise_scale: DEFAULT_EVAL_NOISE_SCALE, seeds: (0..10).collect() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSection {
    pub extra_dims: usize,
    pub coupling: f64,
    pub noise_std: f64,
}

impl Default for AugmentSection {
    fn default() -> Self {
        AugmentSection { extra_dims: 8, coupling: 1.0, noise_std: 1.0 }
    }
}

/// Per-command flag overrides that beat both file values and defaults.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrainFlags {
    pub epochs: Option<usize>,
    pub weight: Option<f64>,
    pub margin: Option<f64>,
}

/// Load the config document, if any, and fold the global --seed flag into
/// both the generator seed and the training seed. A broken or unknown-key
/// file is a config error (exit 2), not a data error.
pub fn load(path: Option<&Path>, seed_flag: Option<u64>) -> Result<RunConfig> {
    let mut cfg: RunConfig = match path {
        None => RunConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config '{}': {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("config '{}': {e}", p.display())))?
        }
    };
    if let Some(s) = seed_flag {
        cfg.scm.seed = s;
        cfg.train.seed = Some(s);
    }
    cfg.scm.validate()?;
    Ok(cfg)
}

/// Merge defaults, provenance, file and flags into a concrete TrainConfig.
/// Weight/margin defaults follow the dataset: generated synthetic data gets
/// 0.1/30, everything else (augmented or external) 1.0/100.
pub fn resolve_train(
    cfg: &RunConfig,
    provenance: &Provenance,
    flags: &TrainFlags,
) -> Result<TrainConfig> {
    let mut tc = TrainConfig::default();
    let synthetic =
        matches!(provenance, Provenance::Synthetic(_) | Provenance::LinearScm(_));
    if !synthetic {
        tc.contrastive_weight = 1.0;
        tc.margin = 100.0;
    }
    let t = &cfg.train;
    if let Some(v) = t.seed {
        tc.seed = v;
    }
    if let Some(v) = t.epochs {
        tc.epochs = v;
    }
    if let Some(v) = t.batch_size {
        tc.batch_size = v;
    }
    if let Some(v) = t.lr {
        tc.lr = v;
    }
    if let Some(v) = t.huber_delta {
        tc.huber_delta = v;
    }
    if let Some(v) = t.contrastive_weight {
        tc.contrastive_weight = v;
    }
    if let Some(v) = t.margin {
        tc.margin = v;
    }
    if let Some(m) = &t.mining {
        tc.mining = m.clone();
    }
    if let Some(v) = flags.epochs {
        tc.epochs = v;
    }
    if let Some(v) = flags.weight {
        tc.contrastive_weight = v;
    }
    if let Some(v) = flags.margin {
        tc.margin = v;
    }
    tc.validate()?;
    Ok(tc)
}

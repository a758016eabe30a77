//! Pipeline configuration file.
//!
//! TOML with one table per stage. The hyperparameters that drive the
//! method (`vgae.latent_dim`, `gfn.knn_k`, `reward.alpha`,
//! `augment.n_synthetic`) have no defaults and must be written out.
//! Unknown keys are rejected. Relative paths resolve against the directory
//! holding the config file.
//!
//! ```toml
//! seed = 7
//!
//! [paths]
//! train = "train.tsv"
//! valid = "valid.tsv"
//! test = "test.tsv"
//! drug_vocabulary = "drugs.tsv"   # optional
//! type_vocabulary = "types.tsv"   # optional
//! out = "run"
//!
//! [vgae]
//! latent_dim = 16
//!
//! [gfn]
//! knn_k = 20
//!
//! [reward]
//! alpha = 1.0
//!
//! [augment]
//! n_synthetic = 200
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::RewardConfig;
use crate::error::{Error, Result};
use crate::gflownet::GfnConfig;
use crate::numerics::Rng;
use crate::vgae::VgaeConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drug_vocabulary: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub type_vocabulary: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VgaeSection {
    pub latent_dim: usize,
    #[serde(default = "defaults::hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "defaults::encoder_layers")]
    pub encoder_layers: usize,
    #[serde(default = "defaults::vgae_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::vgae_epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::vgae_batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::kl_weight")]
    pub kl_weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GfnSection {
    pub knn_k: usize,
    #[serde(default = "defaults::gfn_epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::gfn_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::gfn_batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::gfn_hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "defaults::type_embedding_dim")]
    pub type_embedding_dim: usize,
    #[serde(default)]
    pub exploration: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSection {
    pub alpha: f64,
    #[serde(default = "defaults::epsilon_floor")]
    pub epsilon_floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSection {
    pub n_synthetic: usize,
}

/// Reference distribution for the divergence metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    /// Every type equally likely.
    Uniform,
    /// Type frequencies over train, valid and test together.
    Empirical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    #[serde(default = "defaults::coverage_threshold")]
    pub coverage_threshold: usize,
    #[serde(default = "defaults::reference")]
    pub reference: Reference,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            coverage_threshold: defaults::coverage_threshold(),
            reference: defaults::reference(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: PathsSection,
    pub vgae: VgaeSection,
    /// Settings for the retrained model; `[vgae]` is reused when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vgae_final: Option<VgaeSection>,
    pub gfn: GfnSection,
    pub reward: RewardSection,
    pub augment: AugmentSection,
    #[serde(default)]
    pub metrics: MetricsSection,
}

mod defaults {
    use super::Reference;

    pub fn hidden_dim() -> usize {
        32
    }
    pub fn encoder_layers() -> usize {
        2
    }
    pub fn vgae_learning_rate() -> f64 {
        0.01
    }
    pub fn vgae_epochs() -> usize {
        200
    }
    pub fn vgae_batch_size() -> usize {
        128
    }
    pub fn kl_weight() -> f64 {
        1.0
    }
    pub fn gfn_epochs() -> usize {
        500
    }
    pub fn gfn_learning_rate() -> f64 {
        0.01
    }
    pub fn gfn_batch_size() -> usize {
        64
    }
    pub fn gfn_hidden_dim() -> usize {
        64
    }
    pub fn type_embedding_dim() -> usize {
        16
    }
    pub fn epsilon_floor() -> f64 {
        1e-12
    }
    pub fn coverage_threshold() -> usize {
        1
    }
    pub fn reference() -> Reference {
        Reference::Uniform
    }
}

/// Stage labels used to derive per-stage seeds. Both autoencoder fits share
/// one stream so an empty augmentation reproduces the baseline.
pub mod streams {
    pub const VGAE: &str = "vgae";
    pub const GFN: &str = "gfn";
    pub const AUGMENT: &str = "augment";
    pub const NEGATIVES: &str = "negatives";
}

impl VgaeSection {
    pub fn to_config(&self, seed: u64) -> VgaeConfig {
        VgaeConfig {
            latent_dim: self.latent_dim,
            hidden_dim: self.hidden_dim,
            encoder_layers: self.encoder_layers,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            kl_weight: self.kl_weight,
            seed,
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.vgae_config().validate()?;
        self.final_vgae_config().validate()?;
        self.gfn_config().validate()?;
        self.reward_config().validate()?;
        if self.metrics.coverage_threshold == 0 {
            return Err(Error::Config("metrics.coverage_threshold must be at least 1".into()));
        }
        Ok(())
    }

    pub fn stage_seed(&self, stream: &str) -> u64 {
        Rng::derive_seed(self.seed, stream)
    }

    pub fn vgae_config(&self) -> VgaeConfig {
        self.vgae.to_config(self.stage_seed(streams::VGAE))
    }

    pub fn final_vgae_config(&self) -> VgaeConfig {
        self.vgae_final
            .as_ref()
            .unwrap_or(&self.vgae)
            .to_config(self.stage_seed(streams::VGAE))
    }

    pub fn gfn_config(&self) -> GfnConfig {
        GfnConfig {
            epochs: self.gfn.epochs,
            learning_rate: self.gfn.learning_rate,
            knn_k: self.gfn.knn_k,
            batch_size: self.gfn.batch_size,
            hidden_dim: self.gfn.hidden_dim,
            type_embedding_dim: self.gfn.type_embedding_dim,
            exploration: self.gfn.exploration,
            seed: self.stage_seed(streams::GFN),
        }
    }

    pub fn reward_config(&self) -> RewardConfig {
        RewardConfig {
            alpha: self.reward.alpha,
            epsilon_floor: self.reward.epsilon_floor,
        }
    }

    /// Makes every relative path absolute against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        fix(&mut paths.train);
        fix(&mut paths.valid);
        fix(&mut paths.test);
        fix(&mut paths.out);
        if let Some(p) = paths.drug_vocabulary.as_mut() {
            fix(p);
        }
        if let Some(p) = paths.type_vocabulary.as_mut() {
            fix(p);
        }
    }
}

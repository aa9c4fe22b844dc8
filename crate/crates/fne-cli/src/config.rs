//! Resolved run configuration: defaults < config file < CLI flags.
//!
//! The fully resolved config is serialized verbatim into every output
//! directory so a run can always be re-created from its artifacts.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use fne_core::datagen::SyntheticSpec;
use fne_core::model::TrainConfig;
use fne_core::sampler::{FneConfig, SamplingMode};
use fne_core::train::LoopOptions;

use crate::error::{io_err, CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub clusters: usize,
    pub items_per_cluster: usize,
    pub captions_per_image: usize,
    pub latent_dim: usize,
    pub image_view_dim: usize,
    pub text_view_dim: usize,
    pub noise_sigma: f64,
    pub duplicate_rate: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        let spec = SyntheticSpec::default();
        DataSection {
            clusters: spec.n_clusters,
            items_per_cluster: spec.items_per_cluster,
            captions_per_image: spec.captions_per_image,
            latent_dim: spec.latent_dim,
            image_view_dim: spec.image_view_dim,
            text_view_dim: spec.text_view_dim,
            noise_sigma: spec.noise_sigma,
            duplicate_rate: spec.duplicate_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: u32,
    pub batch_size: usize,
    pub lr_decay_epochs: Vec<u32>,
    pub lr_decay_factor: f64,
    pub embed_dim: usize,
    pub bank_capacity: usize,
    pub momentum: f64,
    /// Admitted samples per class before the tracker is trusted. The
    /// default is sized to the synthetic fixture; larger corpora can raise
    /// it.
    pub min_ready_count: u64,
    pub sigma_floor: f64,
    pub mode: String,
    pub reset_tracker_each_epoch: bool,
    pub clear_banks_each_epoch: bool,
    pub track_bank_candidates: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let train = TrainConfig::default();
        let options = LoopOptions::default();
        TrainSection {
            margin: train.margin,
            learning_rate: train.learning_rate,
            epochs: train.epochs,
            batch_size: train.batch_size,
            lr_decay_epochs: train.lr_decay_epochs,
            lr_decay_factor: train.lr_decay_factor,
            embed_dim: 16,
            bank_capacity: 8192,
            momentum: 0.995,
            min_ready_count: 200,
            sigma_floor: 1e-6,
            mode: SamplingMode::Fne.as_str().to_string(),
            reset_tracker_each_epoch: options.reset_tracker_each_epoch,
            clear_banks_each_epoch: options.clear_banks_each_epoch,
            track_bank_candidates: options.track_bank_candidates,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FneSection {
    pub prior_p: f64,
    pub alpha: f64,
    pub lambda: f64,
}

impl Default for FneSection {
    fn default() -> Self {
        let fne = FneConfig::default();
        FneSection { prior_p: fne.prior_p, alpha: fne.alpha, lambda: fne.lambda }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; per-purpose streams (data, init, epochs) are derived
    /// from it so one consumer cannot perturb another.
    pub seed: u64,
    pub data: DataSection,
    pub train: TrainSection,
    pub fne: FneSection,
}

impl RunConfig {
    /// Parse a TOML config file; absent keys keep their defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|e| {
            CliError::Usage(format!("{}: {e}", path.display()))
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .expect("RunConfig always serializes");
        std::fs::write(path, text).map_err(io_err(path))
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            n_clusters: self.data.clusters,
            items_per_cluster: self.data.items_per_cluster,
            captions_per_image: self.data.captions_per_image,
            latent_dim: self.data.latent_dim,
            image_view_dim: self.data.image_view_dim,
            text_view_dim: self.data.text_view_dim,
            noise_sigma: self.data.noise_sigma,
            duplicate_rate: self.data.duplicate_rate,
            seed: crate::runner::derive_seed(self.seed, "data"),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            margin: self.train.margin,
            learning_rate: self.train.learning_rate,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            seed: self.seed,
            lr_decay_epochs: self.train.lr_decay_epochs.clone(),
            lr_decay_factor: self.train.lr_decay_factor,
        }
    }

    pub fn fne_config(&self) -> Result<FneConfig> {
        let mode = SamplingMode::from_str(&self.train.mode)?;
        Ok(FneConfig {
            prior_p: self.fne.prior_p,
            alpha: self.fne.alpha,
            lambda: self.fne.lambda,
            mode,
        })
    }

    pub fn loop_options(&self) -> LoopOptions {
        LoopOptions {
            reset_tracker_each_epoch: self.train.reset_tracker_each_epoch,
            clear_banks_each_epoch: self.train.clear_banks_each_epoch,
            track_bank_candidates: self.train.track_bank_candidates,
        }
    }
}

/// Overwrite `slot` when a CLI flag supplied a value.
pub fn apply<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

//! Declarative run configuration: a TOML tree with an explicit version
//! field, defaults for everything except the dataset paths, and hard errors
//! on unknown keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::EncoderKind;
use crate::error::{Error, Result};
use crate::network::{ModelSpec, ReadoutDecoder, UpdateOrder};
use crate::neuron::{ResetMode, SurrogateParams};
use crate::optim::AdamParams;
use crate::plasticity::SsdpConfig;

pub const CONFIG_VERSION: u32 = 1;

/// Environment variable consulted as the dataset-root fallback when a
/// configured data path does not exist as written.
pub const DATA_DIR_ENV: &str = "SSDP_DATA_DIR";

/// Model section; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub t_steps: usize,
    pub tau_m: f64,
    pub v_th: f64,
    pub reset_mode: ResetMode,
    pub tau_n_init: f64,
    pub train_tau_n: bool,
    pub surrogate: SurrogateParams,
    pub update_order: UpdateOrder,
    pub decoder: ReadoutDecoder,
    pub clamp_gradient_steps: bool,
    pub weight_clamp_lo: f64,
    pub weight_clamp_hi: f64,
    pub init_std_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let spec = ModelSpec::default();
        Self {
            hidden_dim: spec.hidden_dim,
            output_dim: spec.output_dim,
            t_steps: spec.t_steps,
            tau_m: spec.tau_m,
            v_th: spec.v_th,
            reset_mode: spec.reset_mode,
            tau_n_init: spec.tau_n_init,
            train_tau_n: spec.train_tau_n,
            surrogate: spec.surrogate,
            update_order: spec.update_order,
            decoder: spec.decoder,
            clamp_gradient_steps: spec.clamp_gradient_steps,
            weight_clamp_lo: spec.weight_clamp.0,
            weight_clamp_hi: spec.weight_clamp.1,
            init_std_scale: spec.init_std_scale,
        }
    }
}

/// Data section; the four paths are the only config fields without defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train_images: String,
    pub train_labels: String,
    pub test_images: String,
    pub test_labels: String,
    #[serde(default = "default_encoder")]
    pub encoder: EncoderKind,
    /// Peak per-step spike probability of the rate encoder.
    #[serde(default = "default_max_rate")]
    pub max_rate: f64,
    /// Optional cap on the number of training / test samples.
    #[serde(default)]
    pub train_limit: Option<usize>,
    #[serde(default)]
    pub test_limit: Option<usize>,
    /// Fraction of the training split held out for validation.
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
}

fn default_encoder() -> EncoderKind {
    EncoderKind::Latency
}

fn default_max_rate() -> f64 {
    0.5
}

fn default_val_fraction() -> f64 {
    0.1
}

/// Schedule section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    /// Cosine-anneal the learning rate from its configured value down to
    /// `lr_min` over the run.
    pub lr_cosine: bool,
    pub lr_min: f64,
    /// Cosine-anneal the SSDP rate scalars down to `ssdp_floor_frac` of their
    /// configured values over the run.
    pub ssdp_anneal: bool,
    pub ssdp_floor_frac: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            lr_cosine: true,
            lr_min: 0.0,
            ssdp_anneal: true,
            ssdp_floor_frac: 0.1,
        }
    }
}

/// Full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub optimizer: AdamParams,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    pub data: DataConfig,
    /// SSDP on the input -> hidden projection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ssdp_hidden: Option<SsdpConfig>,
    /// SSDP on the hidden -> readout projection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ssdp_readout: Option<SsdpConfig>,
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

fn default_epochs() -> usize {
    15
}

fn default_batch_size() -> usize {
    128
}

fn default_seed() -> u64 {
    42
}

fn default_output_dir() -> String {
    "runs".into()
}

impl RunConfig {
    /// A config pointing at the given dataset paths, everything else default.
    pub fn with_data(
        train_images: &str,
        train_labels: &str,
        test_images: &str,
        test_labels: &str,
    ) -> Self {
        Self {
            version: CONFIG_VERSION,
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            seed: default_seed(),
            output_dir: default_output_dir(),
            model: ModelConfig::default(),
            optimizer: AdamParams::default(),
            schedule: ScheduleConfig::default(),
            data: DataConfig {
                train_images: train_images.into(),
                train_labels: train_labels.into(),
                test_images: test_images.into(),
                test_labels: test_labels.into(),
                encoder: default_encoder(),
                max_rate: default_max_rate(),
                train_limit: None,
                test_limit: None,
                val_fraction: default_val_fraction(),
            },
            ssdp_hidden: None,
            ssdp_readout: None,
        }
    }

    /// Parse from TOML; unknown keys are hard errors.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Canonical TOML serialization (struct field order, stable floats).
    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        self.optimizer.validate()?;
        if !(0.0..1.0).contains(&self.data.val_fraction) {
            return Err(Error::Config(format!(
                "val_fraction must lie in [0, 1), got {}",
                self.data.val_fraction
            )));
        }
        if !(self.data.max_rate > 0.0 && self.data.max_rate <= 1.0) {
            return Err(Error::Config(format!(
                "max_rate must lie in (0, 1], got {}",
                self.data.max_rate
            )));
        }
        if !(self.schedule.lr_min >= 0.0 && self.schedule.lr_min <= self.optimizer.lr) {
            return Err(Error::Config(format!(
                "lr_min must lie in [0, lr], got {}",
                self.schedule.lr_min
            )));
        }
        if !(self.schedule.ssdp_floor_frac >= 0.0 && self.schedule.ssdp_floor_frac <= 1.0) {
            return Err(Error::Config(format!(
                "ssdp_floor_frac must lie in [0, 1], got {}",
                self.schedule.ssdp_floor_frac
            )));
        }
        for path in [
            &self.data.train_images,
            &self.data.train_labels,
            &self.data.test_images,
            &self.data.test_labels,
        ] {
            if path.is_empty() {
                return Err(Error::Config("dataset paths must not be empty".into()));
            }
        }
        // Build a model spec purely to reuse its validation (dims are
        // placeholders; the real input_dim comes from the dataset).
        self.model_spec(1).validate()?;
        Ok(())
    }

    /// Resolve a configured data path: as written if it exists, otherwise
    /// relative to `$SSDP_DATA_DIR` when that is set.
    pub fn resolve_data_path(&self, configured: &str) -> PathBuf {
        let direct = PathBuf::from(configured);
        if direct.exists() {
            return direct;
        }
        if let Ok(root) = std::env::var(DATA_DIR_ENV) {
            let candidate = Path::new(&root).join(configured);
            if candidate.exists() {
                return candidate;
            }
        }
        direct
    }

    /// Model spec for a dataset with `input_dim` pixels per sample.
    pub fn model_spec(&self, input_dim: usize) -> ModelSpec {
        let m = &self.model;
        ModelSpec {
            input_dim,
            hidden_dim: m.hidden_dim,
            output_dim: m.output_dim,
            t_steps: m.t_steps,
            tau_m: m.tau_m,
            v_th: m.v_th,
            reset_mode: m.reset_mode,
            tau_n_init: m.tau_n_init,
            train_tau_n: m.train_tau_n,
            surrogate: m.surrogate,
            ssdp_hidden: self.ssdp_hidden.clone(),
            ssdp_readout: self.ssdp_readout.clone(),
            update_order: m.update_order,
            decoder: m.decoder,
            clamp_gradient_steps: m.clamp_gradient_steps,
            weight_clamp: (m.weight_clamp_lo, m.weight_clamp_hi),
            init_std_scale: m.init_std_scale,
        }
    }

    /// SHA-256 over the canonical serialization.
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        crate::raster::hex_string(&digest)
    }

    /// First 8 hex chars of [`config_hash`](Self::config_hash); used in run
    /// directory names.
    pub fn short_hash(&self) -> String {
        self.config_hash()[..8].to_string()
    }

    /// Run directory: `<output_dir>/<short_hash>-s<seed>`.
    pub fn run_dir(&self) -> PathBuf {
        Path::new(&self.output_dir).join(format!("{}-s{}", self.short_hash(), self.seed))
    }
}

use std::path::{Path, PathBuf};

use fedx_core::data::{PartitionMode, SyntheticSpec, Task};
use fedx_core::federation::{FedConfig, Strategy};
use fedx_core::nn::ArchConfig;
use fedx_core::trainer::{LossKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const MAX_SWEEP_RATE: f64 = 0.95;

fn default_holdout() -> usize {
    16
}

fn default_reference() -> usize {
    64
}

fn default_test() -> usize {
    50
}

fn default_partition() -> PartitionMode {
    PartitionMode::LabelSkew { labels_per_client: 1 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub synth: SyntheticSpec,
    #[serde(default = "default_partition")]
    pub partition: PartitionMode,
    /// Samples per class moved from the generated pool to the server holdout.
    #[serde(default = "default_holdout")]
    pub holdout_per_class: usize,
    /// `M_ref`, drawn from the holdout.
    #[serde(default = "default_reference")]
    pub reference_size: usize,
    /// Samples per class in the separately generated test set.
    #[serde(default = "default_test")]
    pub test_per_class: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            synth: SyntheticSpec::default(),
            partition: default_partition(),
            holdout_per_class: default_holdout(),
            reference_size: default_reference(),
            test_per_class: default_test(),
        }
    }
}

fn default_rates() -> Vec<f64> {
    vec![0.0, 0.5, 0.7, 0.8, 0.9]
}

fn default_methods() -> Vec<Strategy> {
    vec![Strategy::LrpLayerwise, Strategy::LrpGlobal, Strategy::Random]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_rates")]
    pub q: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Strategy>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            q: default_rates(),
            methods: default_methods(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Defaults to the desk CNN sized for the synthetic images.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<ArchConfig>,
    pub fed: FedConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Desk-scale defaults: 8 clients with one label each, 20 rounds,
    /// pruning from round 10.
    pub fn desk_default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            arch: None,
            fed: FedConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            sweep: SweepConfig::default(),
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let message = inner.to_string();
            let path = match missing_field(&message) {
                Some(field) if path == "." => field.to_string(),
                Some(field) => format!("{path}.{field}"),
                None => path,
            };
            CliError::config(path, message)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::MissingInput {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> CliResult<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Replaces every seed in the config (federation and data generation).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.fed.seed = seed;
        self.data.synth.seed = seed;
        self
    }

    pub fn arch(&self) -> ArchConfig {
        self.arch.clone().unwrap_or_else(|| {
            let s = &self.data.synth;
            ArchConfig::desk_cnn(s.channels, s.height, s.width, s.num_classes)
        })
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::config(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        let wrap = |path: &str, r: fedx_core::Result<()>| {
            r.map_err(|e| CliError::config(path, e.to_string()))
        };
        wrap("fed", self.fed.validate())?;
        wrap("train", self.train.validate())?;
        wrap("data.synth", self.data.synth.validate())?;
        let expected = match self.data.synth.task {
            Task::SingleLabel => LossKind::CategoricalCe,
            Task::MultiLabel => LossKind::BinaryCe,
        };
        if self.train.loss != expected {
            return Err(CliError::config(
                "train.loss",
                format!("{:?} task needs {:?} loss", self.data.synth.task, expected),
            ));
        }
        let arch = self.arch();
        wrap("arch", arch.validate().map(|_| ()))?;
        if arch.input_shape != self.data.synth.sample_shape() || arch.num_classes != self.data.synth.num_classes {
            return Err(CliError::config("arch", "input shape or class count does not match data.synth"));
        }
        if self.data.reference_size == 0 || self.data.reference_size > self.data.holdout_per_class * self.data.synth.num_classes {
            return Err(CliError::config(
                "data.reference_size",
                "must lie in 1..=holdout_per_class * num_classes",
            ));
        }
        if self.data.test_per_class == 0 {
            return Err(CliError::config("data.test_per_class", "must be >= 1"));
        }
        if self.sweep.methods.is_empty() {
            return Err(CliError::config("sweep.methods", "must not be empty"));
        }
        if self.sweep.q.is_empty() {
            return Err(CliError::config("sweep.q", "must not be empty"));
        }
        if let Some(q) = self.sweep.q.iter().find(|q| !(0.0..=MAX_SWEEP_RATE).contains(*q)) {
            return Err(CliError::config("sweep.q", format!("{q} outside [0, {MAX_SWEEP_RATE}]")));
        }
        Ok(())
    }
}

fn missing_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("missing field `")?;
    rest.split('`').next()
}

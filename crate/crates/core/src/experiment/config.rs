//! TOML experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{SplitFractions, SynthSpec};
use crate::error::{Error, Result};
use crate::federation::FederationConfig;
use crate::models::{LstmClassifierConfig, ModelConfig, ModelKind, TransformerClassifierConfig};
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paradigm {
    Centralized,
    Local,
    Fedavg,
    Fedensemble,
}

impl Paradigm {
    pub const ALL: [Paradigm; 4] = [
        Paradigm::Centralized,
        Paradigm::Local,
        Paradigm::Fedavg,
        Paradigm::Fedensemble,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Paradigm::Centralized => "centralized",
            Paradigm::Local => "local",
            Paradigm::Fedavg => "fedavg",
            Paradigm::Fedensemble => "fedensemble",
        }
    }

    pub fn is_federated(self) -> bool {
        matches!(self, Paradigm::Fedavg | Paradigm::Fedensemble)
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Paradigm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Paradigm::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown paradigm `{s}` (valid: centralized, local, fedavg, fedensemble)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub paradigm: Paradigm,
    pub model: ModelKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/latest")
}

/// Where windows come from: a prepared window file, raw keypoint frames, or
/// (when neither is set) the `[synthetic]` generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub windows: Option<PathBuf>,
    pub raw: Option<PathBuf>,
    /// Frame size for `raw` input, pixels.
    pub image_width: f64,
    pub image_height: f64,
    pub split: SplitFractions,
    /// Subjects withheld from all training and used for external evaluation.
    pub external: Vec<String>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            windows: None,
            raw: None,
            image_width: 640.0,
            image_height: 480.0,
            split: SplitFractions::default(),
            external: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub lstm: LstmClassifierConfig,
    pub transformer: TransformerClassifierConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub batch_size: usize,
    pub lr: f64,
    pub max_epochs: usize,
    /// 0 disables early stopping.
    pub patience: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            batch_size: 64,
            lr: 2e-4,
            max_epochs: 500,
            patience: 15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationSection {
    pub rounds: usize,
    pub local_epochs: usize,
    /// Number of IID partitions for fedensemble.
    pub clients: usize,
}

impl Default for FederationSection {
    fn default() -> Self {
        Self {
            rounds: 20,
            local_epochs: 25,
            clients: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub synthetic: SynthSpec,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub federation: FederationSection,
}

impl ExperimentConfig {
    pub fn new(paradigm: Paradigm, model: ModelKind, seed: u64) -> Self {
        Self {
            experiment: ExperimentSection {
                paradigm,
                model,
                seed,
                out_dir: default_out_dir(),
            },
            data: DataSection::default(),
            synthetic: SynthSpec::default(),
            model: ModelSection::default(),
            training: TrainingSection::default(),
            federation: FederationSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.windows.is_some() && self.data.raw.is_some() {
            return Err(Error::Config("set at most one of data.windows and data.raw".into()));
        }
        self.data.split.validate()?;
        if self.data.windows.is_none() && self.data.raw.is_none() {
            self.synthetic.validate()?;
        }
        self.model_config().validate()?;
        self.train_config().validate()?;
        if self.experiment.paradigm.is_federated() {
            self.federation_config(1).validate()?;
            if self.federation.rounds == 0 || self.federation.local_epochs == 0 {
                return Err(Error::Config("federation rounds and local_epochs must be >= 1".into()));
            }
        }
        if self.experiment.paradigm == Paradigm::Fedensemble && self.federation.clients == 0 {
            return Err(Error::Config("federation.clients must be >= 1".into()));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        match self.experiment.model {
            ModelKind::Lstm => ModelConfig::Lstm(self.model.lstm),
            ModelKind::Transformer => ModelConfig::Transformer(self.model.transformer),
        }
    }

    /// Settings for centralized and local-baseline training.
    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            batch_size: t.batch_size,
            lr: t.lr,
            max_epochs: t.max_epochs,
            patience: (t.patience > 0).then_some(t.patience),
            seed: self.experiment.seed,
        }
    }

    pub fn federation_config(&self, parallel_clients: usize) -> FederationConfig {
        FederationConfig {
            rounds: self.federation.rounds,
            local_epochs: self.federation.local_epochs,
            batch_size: self.training.batch_size,
            lr: self.training.lr,
            seed: self.experiment.seed,
            parallel_clients,
        }
    }

    /// Warnings that do not stop a run, currently only the epoch-budget check
    /// `rounds * local_epochs == max_epochs` for federated paradigms.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.experiment.paradigm.is_federated() {
            let fed = self.federation.rounds * self.federation.local_epochs;
            if fed != self.training.max_epochs {
                out.push(format!(
                    "budget parity violated: rounds x local_epochs = {} x {} = {fed} but max_epochs = {}",
                    self.federation.rounds, self.federation.local_epochs, self.training.max_epochs
                ));
            }
        }
        out
    }
}

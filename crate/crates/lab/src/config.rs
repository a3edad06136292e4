//! Experiment configuration as TOML with four optional sections:
//! `[synth]`, `[model]`, `[train]` and `[mer]`. Missing fields take their
//! defaults; unknown keys are errors.

use std::fs;
use std::path::Path;

use merdg_core::diagnostics::ProbeConfig;
use merdg_core::net::{BaselineReg, ModelSpec, TrainConfig};
use merdg_core::study::StudyConfig;
use merdg_core::synth::SynthConfig;
use merdg_core::MerConfig;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    pub model: ModelSection,
    pub train: TrainSection,
    pub mer: MerSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    /// When set, must match the widths of the data the model is trained on.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_dims: Option<Vec<usize>>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            hidden: vec![64, 64],
            embed_dim: 16,
            input_dims: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub val_fraction: f64,
    /// `none`, `dropout:P`, `feature-noise:S`, `weight-decay:W` or
    /// `label-smoothing:S`.
    pub baseline_reg: String,
    /// Also train one single-encoder model per modality.
    pub unimodal: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed: t.seed,
            val_fraction: t.val_fraction,
            baseline_reg: t.baseline_reg.to_string(),
            unimodal: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MerSection {
    /// Whether training adds the regularizer; the other fields are ignored
    /// when false.
    pub enabled: bool,
    pub gamma: f64,
    pub eps: f64,
    pub alpha_marg: f64,
    pub alpha_spec: f64,
    pub lambda: f64,
}

impl Default for MerSection {
    fn default() -> Self {
        let m = MerConfig::default();
        MerSection {
            enabled: false,
            gamma: m.gamma,
            eps: m.eps,
            alpha_marg: m.alpha_marg,
            alpha_spec: m.alpha_spec,
            lambda: m.lambda,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| LabError::Config {
            path: origin.to_path_buf(),
            message: e.message().to_string(),
        })?;
        cfg.validate().map_err(|e| LabError::Config {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Defaults when no path is given.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> merdg_core::Result<()> {
        self.synth.validate()?;
        self.train_config()?.validate()?;
        self.mer_config().validate()
    }

    pub fn mer_config(&self) -> MerConfig {
        MerConfig {
            gamma: self.mer.gamma,
            eps: self.mer.eps,
            alpha_marg: self.mer.alpha_marg,
            alpha_spec: self.mer.alpha_spec,
            lambda: self.mer.lambda,
        }
    }

    pub fn baseline_reg(&self) -> merdg_core::Result<BaselineReg> {
        BaselineReg::parse(&self.train.baseline_reg)
    }

    /// Training configuration with the regularizer switched by `mer.enabled`.
    pub fn train_config(&self) -> merdg_core::Result<TrainConfig> {
        Ok(TrainConfig {
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            seed: self.train.seed,
            mer: self.mer.enabled.then(|| self.mer_config()),
            baseline_reg: self.baseline_reg()?,
            val_fraction: self.train.val_fraction,
        })
    }

    /// Architecture for data of the given widths.
    pub fn model_spec(&self, data_dims: &[usize], num_classes: usize) -> Result<ModelSpec> {
        if let Some(dims) = &self.model.input_dims {
            if dims.as_slice() != data_dims {
                return Err(merdg_core::Error::DimensionMismatch(format!(
                    "config expects input widths {dims:?}, data has {data_dims:?}"
                ))
                .into());
            }
        }
        Ok(ModelSpec {
            input_dims: data_dims.to_vec(),
            hidden: self.model.hidden.clone(),
            embed_dim: self.model.embed_dim,
            num_classes,
        })
    }

    pub fn study_config(&self) -> merdg_core::Result<StudyConfig> {
        Ok(StudyConfig {
            synth: self.synth.clone(),
            hidden: self.model.hidden.clone(),
            embed_dim: self.model.embed_dim,
            train: self.train_config()?,
            mer: self.mer_config(),
            probe: ProbeConfig::default(),
        })
    }
}

//! Run configuration: one JSON document, overridable from flags.

use std::fs;
use std::path::{Path, PathBuf};

use gcvae_core::datagen::Scenario;
use gcvae_core::inference::Method;
use gcvae_core::model::{Hyperparams, Objective, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Stage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub objective: Objective,
    pub model: ModelConfig,
    pub train: TrainSettings,
    pub estimator: EstimatorSettings,
    pub data: DataConfig,
    pub seed: u64,
    /// Output directory for `model.json` and `report.json`.
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            objective: Objective::TwoTower,
            model: ModelConfig::default(),
            train: TrainSettings::default(),
            estimator: EstimatorSettings::default(),
            data: DataConfig::default(),
            seed: 0,
            out: None,
        }
    }
}

/// Network sizes; `n_max` and `d` come from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_z: usize,
    pub recognition_hidden: usize,
    pub message_passing_layers: usize,
    pub prior_hidden: usize,
    pub decoder_hidden: usize,
    pub feature_variance: f64,
    pub model_features: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let hp = Hyperparams::new(1, 0);
        Self {
            d_z: hp.d_z,
            recognition_hidden: hp.recognition_hidden,
            message_passing_layers: hp.message_passing_layers,
            prior_hidden: hp.prior_hidden,
            decoder_hidden: hp.decoder_hidden,
            feature_variance: hp.feature_variance,
            model_features: hp.model_features,
        }
    }
}

impl ModelConfig {
    pub fn hyperparams(&self, n_max: usize, d: usize) -> Hyperparams {
        Hyperparams {
            n_max,
            d,
            d_z: self.d_z,
            recognition_hidden: self.recognition_hidden,
            message_passing_layers: self.message_passing_layers,
            prior_hidden: self.prior_hidden,
            decoder_hidden: self.decoder_hidden,
            feature_variance: self.feature_variance,
            model_features: self.model_features,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: Option<f64>,
    pub patience: Option<usize>,
    /// Share of the training graphs held out for early stopping of the
    /// discriminative objectives.
    pub val_fraction: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            clip_norm: t.clip_norm,
            patience: t.patience,
            val_fraction: 0.2,
        }
    }
}

impl TrainSettings {
    pub fn train_config(&self, objective: Objective) -> TrainConfig {
        TrainConfig {
            objective,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            clip_norm: self.clip_norm,
            patience: self.patience,
        }
    }

    /// Whether a validation split is carved out for `objective`.
    pub fn uses_validation(&self, objective: Objective) -> bool {
        objective.is_discriminative() && self.patience.is_some() && self.val_fraction > 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSettings {
    /// `None` picks `celbo` for discriminative objectives and `importance`
    /// otherwise.
    pub method: Option<Method>,
    pub samples: usize,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            method: None,
            samples: 32,
        }
    }
}

impl EstimatorSettings {
    pub fn method_for(&self, objective: Objective) -> Method {
        self.method.unwrap_or(if objective.is_discriminative() {
            Method::Celbo
        } else {
            Method::Importance
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum DataConfig {
    /// Synthetic train and test sets drawn from one scenario.
    Generate {
        #[serde(flatten)]
        scenario: Scenario,
        n: usize,
        d: usize,
        train_per_class: usize,
        test_per_class: usize,
    },
    /// JSON Lines files in the graph record format.
    Files {
        train: PathBuf,
        test: PathBuf,
        #[serde(default)]
        n_max: Option<usize>,
    },
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Generate {
            scenario: Scenario::ErSplit {
                p_pos: 0.6,
                p_neg: 0.2,
            },
            n: 12,
            d: 0,
            train_per_class: 50,
            test_per_class: 50,
        }
    }
}

/// Flag values that override the config document.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub objective: Option<Objective>,
    pub method: Option<Method>,
    pub samples: Option<usize>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::bad_input(Stage::Config, format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
            .map_err(|e| CliError::bad_input(Stage::Config, format!("{}: {}", path.display(), e.message())))
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::bad_input(Stage::Config, e.to_string()))
    }

    /// Config file (or defaults) with flag overrides applied, validated.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.objective {
            self.objective = v;
        }
        if let Some(v) = o.method {
            self.estimator.method = Some(v);
        }
        if let Some(v) = o.samples {
            self.estimator.samples = v;
        }
        if let Some(v) = o.epochs {
            self.train.epochs = v;
        }
        if let Some(v) = o.learning_rate {
            self.train.learning_rate = v;
        }
        if let Some(v) = &o.out {
            self.out = Some(v.clone());
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::bad_input(Stage::Config, msg));
        self.train
            .train_config(self.objective)
            .validate()
            .map_err(|e| CliError::bad_input(Stage::Config, e.to_string()))?;
        self.model
            .hyperparams(1, 0)
            .validate()
            .map_err(|e| CliError::bad_input(Stage::Config, e.to_string()))?;
        if !(0.0..1.0).contains(&self.train.val_fraction) {
            return bad(format!("val_fraction must lie in [0, 1), got {}", self.train.val_fraction));
        }
        if self.estimator.samples == 0 {
            return bad("estimator samples must be at least 1".into());
        }
        if let DataConfig::Generate {
            train_per_class,
            test_per_class,
            ..
        } = self.data
        {
            if train_per_class == 0 || test_per_class == 0 {
                return bad("train_per_class and test_per_class must be at least 1".into());
            }
        }
        Ok(())
    }
}

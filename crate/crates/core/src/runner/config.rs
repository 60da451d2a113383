//! Experiment configuration: a TOML document naming the dataset, the target
//! models, the surrogate, the attacks, the detector setup, and the output
//! knobs. `validate` catches broken references before any training starts.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::learners::net::Activation;
use crate::learners::{LayerSpec, SurrogateArch, TrainConfig, EMBED_WIDTH};
use crate::schema::Schema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub master_seed: u64,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    pub models: Vec<TargetModelConfig>,
    pub surrogate: SurrogateConfig,
    #[serde(default)]
    pub dependencies: DependencyConfig,
    pub attack_set: AttackSetConfig,
    pub attacks: Vec<AttackConfig>,
    #[serde(default)]
    pub detectors: DetectorConfig,
    #[serde(default)]
    pub shap: ShapConfig,
    #[serde(default)]
    pub stats: StatsConfig,
    #[serde(default)]
    pub effort: EffortConfig,
}

fn default_schema_version() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub data: PathBuf,
    pub schema: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Drop one feature from every group correlated above this; omit to
    /// keep all features.
    #[serde(default)]
    pub correlation_threshold: Option<f64>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_true")]
    pub oversample: bool,
    /// Share of the (oversampled) training set kept for the targets; the
    /// rest trains the attacker's surrogate and importance models.
    #[serde(default = "default_target_share")]
    pub target_share: f64,
}

fn default_train_fraction() -> f64 {
    0.75
}

fn default_target_share() -> f64 {
    0.5
}

fn default_true() -> bool {
    true
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            correlation_threshold: None,
            train_fraction: default_train_fraction(),
            oversample: true,
            target_share: default_target_share(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    GradientBoosting,
    RandomForest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetModelConfig {
    pub name: String,
    pub kind: ModelKind,
    pub n_estimators: usize,
    pub max_depth: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed_offset: u64,
}

fn default_learning_rate() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    /// Hidden widths of the embedding stack; a final projection to the
    /// 16-wide embedding is appended automatically when absent.
    pub embed: Vec<usize>,
    #[serde(default = "default_relu")]
    pub embed_activation: String,
    #[serde(default = "default_relu")]
    pub head_activation: String,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_relu() -> String {
    "relu".into()
}

fn default_dropout() -> f64 {
    0.1
}

fn default_epochs() -> usize {
    70
}

fn default_patience() -> usize {
    2
}

fn default_batch() -> usize {
    32
}

impl SurrogateConfig {
    pub fn arch(&self) -> Result<SurrogateArch, ConfigError> {
        let embed_act = parse_activation(&self.embed_activation)?;
        let head_act = parse_activation(&self.head_activation)?;
        let mut layers: Vec<LayerSpec> = self
            .embed
            .iter()
            .map(|&w| LayerSpec {
                width: w,
                activation: embed_act,
            })
            .collect();
        if layers.last().map(|l| l.width) != Some(EMBED_WIDTH) {
            layers.push(LayerSpec {
                width: EMBED_WIDTH,
                activation: Activation::Linear,
            });
        }
        Ok(SurrogateArch {
            embed: layers,
            head_activation: head_act,
            dropout: self.dropout,
        })
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            patience: self.patience,
            seed,
            batch_size: self.batch_size,
        }
    }
}

fn parse_activation(name: &str) -> Result<Activation, ConfigError> {
    match name {
        "relu" => Ok(Activation::Relu),
        "prelu" => Ok(Activation::PRelu),
        "linear" => Ok(Activation::Linear),
        "sigmoid" => Ok(Activation::Sigmoid),
        other => Err(ConfigError::Invalid(format!(
            "unknown activation {other:?}"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DependencyConfig {
    /// Names of dependent features to correct with regressors; they must be
    /// flagged dependent in the schema.
    #[serde(default)]
    pub features: Vec<String>,
    #[serde(default = "default_dep_estimators")]
    pub n_estimators: usize,
    #[serde(default = "default_dep_depth")]
    pub max_depth: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
}

fn default_dep_estimators() -> usize {
    200
}

fn default_dep_depth() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSetConfig {
    pub per_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackConfig {
    Boundary {
        name: String,
        #[serde(default = "default_boundary_iter")]
        max_iter: usize,
        #[serde(default = "default_one")]
        epsilon: f64,
        #[serde(default = "default_one")]
        delta: f64,
        #[serde(default = "default_trials")]
        num_trials: usize,
        #[serde(default = "default_one")]
        step_adaptation: f64,
        #[serde(default = "default_init_steps")]
        max_init_steps: usize,
    },
    Hopskipjump {
        name: String,
        #[serde(default = "default_hsj_iter")]
        max_iter: usize,
        #[serde(default = "default_max_eval")]
        max_eval: usize,
        #[serde(default = "default_init_eval")]
        init_eval: usize,
        #[serde(default = "default_init_size")]
        init_size: usize,
    },
    Transfer {
        name: String,
        selector: SelectorConfig,
        #[serde(default = "default_k")]
        k: usize,
        #[serde(default = "default_n_corr")]
        n_corr: usize,
        #[serde(default = "default_one")]
        alpha_reg: f64,
        #[serde(default = "default_one")]
        learning_rate: f64,
        #[serde(default = "default_inner_steps")]
        inner_steps: usize,
        /// L0 budget; defaults to the editable feature count.
        #[serde(default)]
        lambda_max_l0: Option<usize>,
    },
}

fn default_boundary_iter() -> usize {
    3000
}

fn default_one() -> f64 {
    1.0
}

fn default_trials() -> usize {
    20
}

fn default_init_steps() -> usize {
    100
}

fn default_hsj_iter() -> usize {
    50
}

fn default_max_eval() -> usize {
    10_000
}

fn default_init_eval() -> usize {
    500
}

fn default_init_size() -> usize {
    100
}

fn default_k() -> usize {
    2
}

fn default_n_corr() -> usize {
    1
}

fn default_inner_steps() -> usize {
    10
}

impl AttackConfig {
    pub fn name(&self) -> &str {
        match self {
            AttackConfig::Boundary { name, .. }
            | AttackConfig::Hopskipjump { name, .. }
            | AttackConfig::Transfer { name, .. } => name,
        }
    }

    pub fn is_transfer(&self) -> bool {
        matches!(self, AttackConfig::Transfer { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum SelectorConfig {
    Random,
    /// Importance rankings from a dedicated tree ensemble trained on the
    /// attacker's data.
    Importance {
        kind: ModelKind,
        n_estimators: usize,
        max_depth: usize,
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
        #[serde(default)]
        seed_offset: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_min_class")]
    pub min_class_samples: usize,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default = "default_if_trees")]
    pub if_trees: usize,
    #[serde(default = "default_if_psi")]
    pub if_psi: usize,
    #[serde(default = "default_ae_epochs")]
    pub ae_epochs: usize,
    #[serde(default = "default_ae_lr")]
    pub ae_learning_rate: f64,
    #[serde(default = "default_ae_wd")]
    pub ae_weight_decay: f64,
    #[serde(default = "default_batch")]
    pub ae_batch_size: usize,
}

fn default_min_class() -> usize {
    20
}

fn default_validation_fraction() -> f64 {
    0.2
}

fn default_if_trees() -> usize {
    100
}

fn default_if_psi() -> usize {
    256
}

fn default_ae_epochs() -> usize {
    10
}

fn default_ae_lr() -> f64 {
    1e-3
}

fn default_ae_wd() -> f64 {
    1e-8
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            enabled: true,
            min_class_samples: default_min_class(),
            validation_fraction: default_validation_fraction(),
            if_trees: default_if_trees(),
            if_psi: default_if_psi(),
            ae_epochs: default_ae_epochs(),
            ae_learning_rate: default_ae_lr(),
            ae_weight_decay: default_ae_wd(),
            ae_batch_size: default_batch(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
}

impl Default for ShapConfig {
    fn default() -> Self {
        ShapConfig { enabled: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig { enabled: true }
    }
}

/// Inputs to the attack time models; evaluated literally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortConfig {
    #[serde(default = "default_one")]
    pub t: f64,
    #[serde(default = "default_one")]
    pub alpha_q: f64,
    #[serde(default = "default_one")]
    pub beta: f64,
    #[serde(default)]
    pub t_surrogate: f64,
}

impl Default for EffortConfig {
    fn default() -> Self {
        EffortConfig {
            t: 1.0,
            alpha_q: 1.0,
            beta: 1.0,
            t_surrogate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io(String),
    Parse(String),
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(msg) => write!(f, "config io error: {msg}"),
            ConfigError::Parse(msg) => write!(f, "config parse error: {msg}"),
            ConfigError::Invalid(msg) => write!(f, "invalid config: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        // Dataset paths are resolved relative to the config file.
        if let Some(dir) = path.parent() {
            if cfg.dataset.data.is_relative() {
                cfg.dataset.data = dir.join(&cfg.dataset.data);
            }
            if cfg.dataset.schema.is_relative() {
                cfg.dataset.schema = dir.join(&cfg.dataset.schema);
            }
        }
        Ok(cfg)
    }

    /// Structural validation against the schema document; called before any
    /// training.
    pub fn validate(&self, schema: &Schema) -> Result<(), ConfigError> {
        if self.models.is_empty() {
            return Err(ConfigError::Invalid(
                "at least one target model required".into(),
            ));
        }
        if self.attacks.is_empty() {
            return Err(ConfigError::Invalid("at least one attack required".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for model in &self.models {
            if !names.insert(model.name.clone()) {
                return Err(ConfigError::Invalid(format!(
                    "duplicate model name {}",
                    model.name
                )));
            }
            if model.n_estimators == 0 {
                return Err(ConfigError::Invalid(format!(
                    "model {}: n_estimators must be >= 1",
                    model.name
                )));
            }
        }
        let mut attack_names = std::collections::BTreeSet::new();
        for attack in &self.attacks {
            if !attack_names.insert(attack.name().to_string()) {
                return Err(ConfigError::Invalid(format!(
                    "duplicate attack name {}",
                    attack.name()
                )));
            }
        }
        for feature in &self.dependencies.features {
            match schema.feature_index(feature) {
                None => {
                    return Err(ConfigError::Invalid(format!(
                        "dependent feature {feature} not in schema"
                    )))
                }
                Some(idx) => {
                    if !schema.features[idx].dependent {
                        return Err(ConfigError::Invalid(format!(
                            "feature {feature} is not flagged dependent in the schema"
                        )));
                    }
                }
            }
        }
        if !(self.preprocess.train_fraction > 0.0 && self.preprocess.train_fraction < 1.0) {
            return Err(ConfigError::Invalid(
                "train_fraction must be in (0, 1)".into(),
            ));
        }
        if !(self.preprocess.target_share > 0.0 && self.preprocess.target_share < 1.0) {
            return Err(ConfigError::Invalid(
                "target_share must be in (0, 1)".into(),
            ));
        }
        if self.attack_set.per_class == 0 {
            return Err(ConfigError::Invalid(
                "attack_set.per_class must be >= 1".into(),
            ));
        }
        for (name, value) in [
            ("effort.t", self.effort.t),
            ("effort.alpha_q", self.effort.alpha_q),
            ("effort.beta", self.effort.beta),
            ("effort.t_surrogate", self.effort.t_surrogate),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(ConfigError::Invalid(format!("{name} must be non-negative")));
            }
        }
        self.surrogate.arch()?;
        Ok(())
    }
}

//! Self-contained learners: CART trees, random forests, gradient-boosted
//! ensembles, the embedding+classifier surrogate network, and the
//! reconstruction autoencoder. Fitting is single-threaded and deterministic
//! per seed; fitted models are immutable and can be queried concurrently.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod autoencoder;
pub mod ensemble;
pub mod net;
pub mod surrogate;
pub mod tree;

pub use autoencoder::{fit_autoencoder, reconstruction_error, AeNet};
pub use ensemble::{
    fit_gradient_boosting, fit_random_forest, fit_random_forest_with, fit_regression_gbm, sigmoid,
    EnsembleKind, ForestParams, TreeEnsemble,
};
pub use net::{Activation, DenseLayer, Mlp};
pub use surrogate::{
    grad_input, train_surrogate, LayerSpec, SurrogateArch, SurrogateModel, EMBED_WIDTH,
};
pub use tree::TreeNode;

/// A binary classifier exposing class-1 probability. Ties at 0.5 predict
/// class 1.
pub trait Classifier: Send + Sync {
    fn n_features(&self) -> usize;
    fn predict_proba(&self, sample: &[f64]) -> f64;
    fn predict(&self, sample: &[f64]) -> usize {
        usize::from(self.predict_proba(sample) >= 0.5)
    }
}

/// Shared training configuration for the network learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub seed: u64,
    pub batch_size: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.epochs == 0 {
            return Err(LearnError::BadConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(LearnError::BadConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 70,
            learning_rate: 1e-2,
            weight_decay: 0.0,
            patience: 2,
            seed: 0,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LearnError {
    EmptyTrainingSet,
    SingleClass,
    NotBinary(usize),
    BadConfig(String),
    DimensionMismatch { expected: usize, got: usize },
    NonFinite(String),
    Diverged { epoch: usize },
}

impl fmt::Display for LearnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnError::EmptyTrainingSet => write!(f, "empty training set"),
            LearnError::SingleClass => write!(f, "training data contains a single class"),
            LearnError::NotBinary(n) => write!(f, "expected binary labels, schema has {n} classes"),
            LearnError::BadConfig(msg) => write!(f, "bad configuration: {msg}"),
            LearnError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            LearnError::NonFinite(what) => write!(f, "non-finite value in {what}"),
            LearnError::Diverged { epoch } => {
                write!(f, "training diverged (non-finite loss) at epoch {epoch}")
            }
        }
    }
}

impl std::error::Error for LearnError {}

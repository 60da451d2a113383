//! Tree ensembles: random forests, logistic gradient boosting, and
//! squared-error boosting for the dependency regressors.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, mean_leaf, TreeFit, TreeNode};
use super::{Classifier, LearnError};
use crate::schema::Dataset;

/// How the ensemble combines tree outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// Prediction = mean of per-tree class-1 probability leaves.
    RandomForest,
    /// Prediction = sigmoid(base_score + learning_rate * sum of tree outputs).
    GradientBoosting,
    /// Prediction = base_score + learning_rate * sum of tree outputs.
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub kind: EnsembleKind,
    pub trees: Vec<TreeNode>,
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
}

impl TreeEnsemble {
    /// Raw margin: log-odds for boosting, probability for forests, the
    /// regression value for regression ensembles.
    pub fn margin(&self, sample: &[f64]) -> f64 {
        assert_eq!(sample.len(), self.n_features, "sample dimension mismatch");
        match self.kind {
            EnsembleKind::RandomForest => {
                let sum: f64 = self.trees.iter().map(|t| t.evaluate(sample)).sum();
                sum / self.trees.len() as f64
            }
            EnsembleKind::GradientBoosting | EnsembleKind::Regression => {
                let sum: f64 = self.trees.iter().map(|t| t.evaluate(sample)).sum();
                self.base_score + self.learning_rate * sum
            }
        }
    }

    pub fn predict_value(&self, sample: &[f64]) -> f64 {
        self.margin(sample)
    }

    pub fn try_predict_proba(&self, sample: &[f64]) -> Result<f64, LearnError> {
        if sample.len() != self.n_features {
            return Err(LearnError::DimensionMismatch {
                expected: self.n_features,
                got: sample.len(),
            });
        }
        Ok(self.proba_unchecked(sample))
    }

    fn proba_unchecked(&self, sample: &[f64]) -> f64 {
        match self.kind {
            EnsembleKind::RandomForest => self.margin(sample),
            EnsembleKind::GradientBoosting => sigmoid(self.margin(sample)),
            EnsembleKind::Regression => {
                panic!("predict_proba called on a regression ensemble")
            }
        }
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

impl Classifier for TreeEnsemble {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, sample: &[f64]) -> f64 {
        assert_eq!(sample.len(), self.n_features, "sample dimension mismatch");
        self.proba_unchecked(sample)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_binary_labels(train: &Dataset) -> Result<(), LearnError> {
    if train.n_rows() == 0 {
        return Err(LearnError::EmptyTrainingSet);
    }
    let counts = train.class_counts();
    if counts.len() != 2 {
        return Err(LearnError::NotBinary(counts.len()));
    }
    if counts[0] == 0 || counts[1] == 0 {
        return Err(LearnError::SingleClass);
    }
    Ok(())
}

/// Leaf values capped here keep sigmoid margins well away from saturation.
const MAX_LEAF: f64 = 15.0;

/// Logistic-loss gradient boosting: trees fit to residuals `y - p`, leaf
/// values set by a per-leaf Newton step, shrunk by `learning_rate`.
pub fn fit_gradient_boosting(
    train: &Dataset,
    n_estimators: usize,
    max_depth: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<TreeEnsemble, LearnError> {
    let _ = seed; // reserved for stochastic row subsampling; fitting is deterministic
    if n_estimators == 0 {
        return Err(LearnError::BadConfig("n_estimators must be >= 1".into()));
    }
    check_binary_labels(train)?;
    let n = train.n_rows();
    let y: Vec<f64> = train.labels.iter().map(|&l| l as f64).collect();
    let pos = y.iter().sum::<f64>() / n as f64;
    let base_score = (pos / (1.0 - pos)).ln();

    let features: Vec<usize> = (0..train.n_features()).collect();
    let mut margins = vec![base_score; n];
    let mut trees = Vec::with_capacity(n_estimators);
    for _ in 0..n_estimators {
        let probs: Vec<f64> = margins.iter().map(|&m| sigmoid(m)).collect();
        let residuals: Vec<f64> = y.iter().zip(&probs).map(|(&yi, &pi)| yi - pi).collect();
        let newton = |members: &[usize]| -> f64 {
            let g: f64 = members.iter().map(|&i| residuals[i]).sum();
            let h: f64 = members.iter().map(|&i| probs[i] * (1.0 - probs[i])).sum();
            (g / (h + 1e-12)).clamp(-MAX_LEAF, MAX_LEAF)
        };
        let fit = TreeFit {
            rows: &train.rows,
            split_targets: &residuals,
            allowed_features: &features,
            max_depth,
            min_samples_leaf: 1,
        };
        let tree = fit_tree(&fit, &newton);
        for (i, margin) in margins.iter_mut().enumerate() {
            *margin += learning_rate * tree.evaluate(&train.rows[i]);
        }
        trees.push(tree);
    }

    Ok(TreeEnsemble {
        kind: EnsembleKind::GradientBoosting,
        trees,
        base_score,
        learning_rate,
        n_features: train.n_features(),
    })
}

/// Random forest options; bagging is off by default so that fitting is a
/// pure function of (data, seed).
#[derive(Debug, Clone)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub seed: u64,
    pub bootstrap: bool,
}

pub fn fit_random_forest(
    train: &Dataset,
    n_estimators: usize,
    max_depth: usize,
    seed: u64,
) -> Result<TreeEnsemble, LearnError> {
    fit_random_forest_with(
        train,
        &ForestParams {
            n_estimators,
            max_depth,
            seed,
            bootstrap: false,
        },
    )
}

/// Classification forest with per-tree feature subsampling of size ceil(sqrt d).
pub fn fit_random_forest_with(
    train: &Dataset,
    params: &ForestParams,
) -> Result<TreeEnsemble, LearnError> {
    if params.n_estimators == 0 {
        return Err(LearnError::BadConfig("n_estimators must be >= 1".into()));
    }
    check_binary_labels(train)?;
    let n = train.n_rows();
    let d = train.n_features();
    let subset = (d as f64).sqrt().ceil() as usize;
    let y: Vec<f64> = train.labels.iter().map(|&l| l as f64).collect();

    let mut trees = Vec::with_capacity(params.n_estimators);
    for t in 0..params.n_estimators {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::seeding::item_seed(params.seed, t as u64));
        let mut all: Vec<usize> = (0..d).collect();
        all.shuffle(&mut rng);
        let mut allowed: Vec<usize> = all.into_iter().take(subset).collect();
        allowed.sort_unstable();

        let (rows, targets): (Vec<Vec<f64>>, Vec<f64>) = if params.bootstrap {
            let picks: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            (
                picks.iter().map(|&i| train.rows[i].clone()).collect(),
                picks.iter().map(|&i| y[i]).collect(),
            )
        } else {
            (train.rows.clone(), y.clone())
        };
        let fit = TreeFit {
            rows: &rows,
            split_targets: &targets,
            allowed_features: &allowed,
            max_depth: params.max_depth,
            min_samples_leaf: 1,
        };
        trees.push(fit_tree(&fit, &mean_leaf(&targets)));
    }

    Ok(TreeEnsemble {
        kind: EnsembleKind::RandomForest,
        trees,
        base_score: 0.0,
        learning_rate: 1.0,
        n_features: d,
    })
}

/// Squared-error gradient boosting over a real-valued target; used for the
/// dependent-feature regressors.
pub fn fit_regression_gbm(
    rows: &[Vec<f64>],
    target: &[f64],
    n_estimators: usize,
    max_depth: usize,
    learning_rate: f64,
) -> Result<TreeEnsemble, LearnError> {
    if n_estimators == 0 {
        return Err(LearnError::BadConfig("n_estimators must be >= 1".into()));
    }
    if rows.is_empty() {
        return Err(LearnError::EmptyTrainingSet);
    }
    if rows.len() != target.len() {
        return Err(LearnError::DimensionMismatch {
            expected: rows.len(),
            got: target.len(),
        });
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(LearnError::NonFinite("regression target".into()));
    }
    let n = rows.len();
    let d = rows[0].len();
    let base_score = target.iter().sum::<f64>() / n as f64;
    let features: Vec<usize> = (0..d).collect();

    let mut preds = vec![base_score; n];
    let mut trees = Vec::with_capacity(n_estimators);
    for _ in 0..n_estimators {
        let residuals: Vec<f64> = target.iter().zip(&preds).map(|(&t, &p)| t - p).collect();
        let fit = TreeFit {
            rows,
            split_targets: &residuals,
            allowed_features: &features,
            max_depth,
            min_samples_leaf: 1,
        };
        let tree = fit_tree(&fit, &mean_leaf(&residuals));
        for (i, pred) in preds.iter_mut().enumerate() {
            *pred += learning_rate * tree.evaluate(&rows[i]);
        }
        trees.push(tree);
    }

    Ok(TreeEnsemble {
        kind: EnsembleKind::Regression,
        trees,
        base_score,
        learning_rate,
        n_features: d,
    })
}

//! Isolation forest with per-tree subsampling (no bootstrapping), one
//! candidate feature per split, and uniform split values within the node's
//! observed range. Anomaly score s = 2^(-E\[h\]/c(psi)).

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CsadError;

const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

/// Average unsuccessful-search path length in a BST of `n` nodes; the
/// normalizer c(n) = 2H(n-1) - 2(n-1)/n, with c(1) = 0.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let nf = n as f64;
            2.0 * ((nf - 1.0).ln() + EULER_MASCHERONI) - 2.0 * (nf - 1.0) / nf
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IfNode {
    Internal {
        feature: usize,
        split: f64,
        left: Box<IfNode>,
        right: Box<IfNode>,
    },
    External {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    pub trees: Vec<IfNode>,
    /// Effective subsample size used per tree.
    pub psi: usize,
}

impl IsolationForest {
    /// Expected path length of `sample` over the trees, with external nodes
    /// contributing c(size) beyond the traversal depth.
    pub fn mean_path_length(&self, sample: &[f64]) -> f64 {
        let total: f64 = self.trees.iter().map(|t| path_length(t, sample, 0.0)).sum();
        total / self.trees.len() as f64
    }

    pub fn score(&self, sample: &[f64]) -> f64 {
        let e_h = self.mean_path_length(sample);
        2f64.powf(-e_h / average_path_length(self.psi))
    }
}

fn path_length(node: &IfNode, sample: &[f64], depth: f64) -> f64 {
    match node {
        IfNode::External { size } => depth + average_path_length(*size),
        IfNode::Internal {
            feature,
            split,
            left,
            right,
        } => {
            if sample[*feature] < *split {
                path_length(left, sample, depth + 1.0)
            } else {
                path_length(right, sample, depth + 1.0)
            }
        }
    }
}

/// Fit a forest of `n_trees` random partition trees, each on a `psi`-row
/// subsample drawn without replacement.
pub fn fit_isolation_forest(
    rows: &[Vec<f64>],
    n_trees: usize,
    psi: usize,
    seed: u64,
) -> Result<IsolationForest, CsadError> {
    if psi < 2 {
        return Err(CsadError::BadSubsample(psi));
    }
    if rows.len() < 2 {
        return Err(CsadError::TooFewRows(rows.len()));
    }
    if n_trees == 0 {
        return Err(CsadError::BadConfig("n_trees must be >= 1".into()));
    }
    let psi = psi.min(rows.len());
    let height_limit = (psi as f64).log2().ceil() as usize;
    let mut trees = Vec::with_capacity(n_trees);
    for t in 0..n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::seeding::item_seed(seed, t as u64));
        let mut indices: Vec<usize> = (0..rows.len()).collect();
        indices.shuffle(&mut rng);
        indices.truncate(psi);
        trees.push(grow(rows, &indices, 0, height_limit, &mut rng));
    }
    Ok(IsolationForest { trees, psi })
}

fn grow(
    rows: &[Vec<f64>],
    indices: &[usize],
    depth: usize,
    limit: usize,
    rng: &mut ChaCha8Rng,
) -> IfNode {
    if depth >= limit || indices.len() <= 1 {
        return IfNode::External {
            size: indices.len(),
        };
    }
    let d = rows[0].len();
    // One candidate feature per split, drawn uniformly among features with a
    // nonzero observed range at this node.
    let splittable: Vec<usize> = (0..d)
        .filter(|&f| {
            let (lo, hi) = feature_range(rows, indices, f);
            hi > lo
        })
        .collect();
    if splittable.is_empty() {
        return IfNode::External {
            size: indices.len(),
        };
    }
    let feature = splittable[rng.gen_range(0..splittable.len())];
    let (lo, hi) = feature_range(rows, indices, feature);
    let split = rng.gen_range(lo..hi);
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
        indices.iter().partition(|&&i| rows[i][feature] < split);
    if left_idx.is_empty() || right_idx.is_empty() {
        return IfNode::External {
            size: indices.len(),
        };
    }
    IfNode::Internal {
        feature,
        split,
        left: Box::new(grow(rows, &left_idx, depth + 1, limit, rng)),
        right: Box::new(grow(rows, &right_idx, depth + 1, limit, rng)),
    }
}

fn feature_range(rows: &[Vec<f64>], indices: &[usize], feature: usize) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &i in indices {
        let v = rows[i][feature];
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

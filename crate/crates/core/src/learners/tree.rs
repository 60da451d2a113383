//! CART nodes and a squared-error split builder.
//!
//! One builder covers both uses: regression trees boosted on residuals, and
//! binary classification trees (squared error on 0/1 targets picks the same
//! splits as Gini). Leaf values come from a caller-supplied closure over the
//! member rows, which is how boosting installs Newton-step leaf values.

use serde::{Deserialize, Serialize};

/// A decision tree node. Samples route left when `x[feature] <= threshold`.
/// `weight` is the number of training rows that reached the node; the SHAP
/// explainer requires it to be positive everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
        weight: f64,
    },
    Leaf {
        value: f64,
        weight: f64,
    },
}

impl TreeNode {
    pub fn evaluate(&self, sample: &[f64]) -> f64 {
        match self {
            TreeNode::Leaf { value, .. } => *value,
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                if sample[*feature] <= *threshold {
                    left.evaluate(sample)
                } else {
                    right.evaluate(sample)
                }
            }
        }
    }

    pub fn weight(&self) -> f64 {
        match self {
            TreeNode::Leaf { weight, .. } | TreeNode::Internal { weight, .. } => *weight,
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Indices of features this tree splits on, ascending and deduplicated.
    pub fn split_features(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_split_features(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_split_features(&self, out: &mut Vec<usize>) {
        if let TreeNode::Internal {
            feature,
            left,
            right,
            ..
        } = self
        {
            out.push(*feature);
            left.collect_split_features(out);
            right.collect_split_features(out);
        }
    }

    /// True if every node weight is strictly positive.
    pub fn weights_positive(&self) -> bool {
        match self {
            TreeNode::Leaf { weight, .. } => *weight > 0.0,
            TreeNode::Internal {
                weight,
                left,
                right,
                ..
            } => *weight > 0.0 && left.weights_positive() && right.weights_positive(),
        }
    }
}

/// Split search configuration for one tree.
pub struct TreeFit<'a> {
    pub rows: &'a [Vec<f64>],
    /// Targets driving the split criterion (residuals for boosting, 0/1
    /// labels for classification trees).
    pub split_targets: &'a [f64],
    /// Features the tree may split on.
    pub allowed_features: &'a [usize],
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

/// Fit a tree; `leaf_value` maps a leaf's member row indices to its value.
pub fn fit_tree(fit: &TreeFit<'_>, leaf_value: &dyn Fn(&[usize]) -> f64) -> TreeNode {
    let indices: Vec<usize> = (0..fit.rows.len()).collect();
    grow(fit, &indices, 0, leaf_value)
}

fn grow(
    fit: &TreeFit<'_>,
    indices: &[usize],
    depth: usize,
    leaf_value: &dyn Fn(&[usize]) -> f64,
) -> TreeNode {
    let weight = indices.len() as f64;
    if depth >= fit.max_depth || indices.len() < 2 * fit.min_samples_leaf {
        return TreeNode::Leaf {
            value: leaf_value(indices),
            weight,
        };
    }
    match best_split(fit, indices) {
        None => TreeNode::Leaf {
            value: leaf_value(indices),
            weight,
        },
        Some((feature, threshold)) => {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                .iter()
                .partition(|&&i| fit.rows[i][feature] <= threshold);
            if left_idx.len() < fit.min_samples_leaf || right_idx.len() < fit.min_samples_leaf {
                return TreeNode::Leaf {
                    value: leaf_value(indices),
                    weight,
                };
            }
            TreeNode::Internal {
                feature,
                threshold,
                left: Box::new(grow(fit, &left_idx, depth + 1, leaf_value)),
                right: Box::new(grow(fit, &right_idx, depth + 1, leaf_value)),
                weight,
            }
        }
    }
}

/// Exhaustive scan over midpoint thresholds, minimizing total SSE of the
/// split targets. Ties break toward the lowest feature index, then the
/// lowest threshold, which keeps fitting deterministic.
fn best_split(fit: &TreeFit<'_>, indices: &[usize]) -> Option<(usize, f64)> {
    let total: f64 = indices.iter().map(|&i| fit.split_targets[i]).sum();
    let total_sq: f64 = indices
        .iter()
        .map(|&i| fit.split_targets[i] * fit.split_targets[i])
        .sum();
    let n = indices.len() as f64;
    let parent_sse = total_sq - total * total / n;
    if parent_sse <= 1e-12 {
        return None; // pure node
    }

    let mut best: Option<(f64, usize, f64)> = None; // (sse, feature, threshold)
    let mut order: Vec<usize> = indices.to_vec();
    for &feature in fit.allowed_features {
        order.sort_by(|&a, &b| {
            fit.rows[a][feature]
                .partial_cmp(&fit.rows[b][feature])
                .expect("finite feature values")
        });
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for pos in 0..order.len() - 1 {
            let i = order[pos];
            let t = fit.split_targets[i];
            left_sum += t;
            left_sq += t * t;
            let v = fit.rows[i][feature];
            let v_next = fit.rows[order[pos + 1]][feature];
            if v == v_next {
                continue;
            }
            let nl = (pos + 1) as f64;
            let nr = n - nl;
            let right_sum = total - left_sum;
            let right_sq = total_sq - left_sq;
            let sse =
                (left_sq - left_sum * left_sum / nl) + (right_sq - right_sum * right_sum / nr);
            let threshold = v + (v_next - v) / 2.0;
            // Features and thresholds scan in ascending order, so requiring a
            // strict improvement keeps the first of any tied candidates.
            let better = match best {
                None => true,
                Some((best_sse, _, _)) => sse < best_sse - 1e-12,
            };
            if better {
                best = Some((sse, feature, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

/// Mean of the split targets over the member rows; the default leaf value
/// for plain regression and for classification probabilities.
pub fn mean_leaf(targets: &[f64]) -> impl Fn(&[usize]) -> f64 + '_ {
    move |members: &[usize]| {
        let s: f64 = members.iter().map(|&i| targets[i]).sum();
        s / members.len() as f64
    }
}

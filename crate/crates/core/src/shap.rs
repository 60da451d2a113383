//! Exact feature attributions for tree ensembles: the polynomial-time
//! path-dependent algorithm, a subset-enumeration oracle it is verified
//! against, per-class benign attribution range tables, and the
//! importance-based anomaly metrics.
//!
//! Conditioning is path-dependent throughout (node sample weights define the
//! background), so the fast path and the oracle compute the same game.
//! Boosted ensembles are explained on the log-odds margin scale, forests on
//! the probability scale.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::csad::DetectionMode;
use crate::learners::{EnsembleKind, TreeEnsemble, TreeNode};
use crate::parallel::maybe_par_map;
use crate::schema::Dataset;

/// Attributions for one sample plus the background expectation. Local
/// accuracy: `base_value + sum(attributions)` equals the model margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub attributions: Vec<f64>,
    pub base_value: f64,
}

impl ShapExplanation {
    pub fn total(&self) -> f64 {
        self.base_value + self.attributions.iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShapError {
    WeightlessTree,
    TooManyFeatures { got: usize, max: usize },
    DimensionMismatch { expected: usize, got: usize },
    EmptyClass(usize),
    EmptyInput,
    Misaligned { left: usize, right: usize },
}

impl fmt::Display for ShapError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShapError::WeightlessTree => {
                write!(f, "tree has a node with non-positive sample weight")
            }
            ShapError::TooManyFeatures { got, max } => {
                write!(
                    f,
                    "brute-force enumeration supports up to {max} features, got {got}"
                )
            }
            ShapError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            ShapError::EmptyClass(c) => write!(f, "no benign rows assigned to class {c}"),
            ShapError::EmptyInput => write!(f, "empty input"),
            ShapError::Misaligned { left, right } => {
                write!(f, "misaligned inputs: {left} vs {right}")
            }
        }
    }
}

impl std::error::Error for ShapError {}

fn ensemble_scale(e: &TreeEnsemble) -> (f64, f64) {
    // (per-tree output scale, base offset)
    match e.kind {
        EnsembleKind::RandomForest => (1.0 / e.trees.len() as f64, 0.0),
        EnsembleKind::GradientBoosting | EnsembleKind::Regression => {
            (e.learning_rate, e.base_score)
        }
    }
}

fn check_ensemble(e: &TreeEnsemble, sample: &[f64]) -> Result<(), ShapError> {
    if sample.len() != e.n_features {
        return Err(ShapError::DimensionMismatch {
            expected: e.n_features,
            got: sample.len(),
        });
    }
    for tree in &e.trees {
        if !tree.weights_positive() {
            return Err(ShapError::WeightlessTree);
        }
    }
    Ok(())
}

/// Expected tree output over the path-dependent background (the empty
/// coalition's value).
fn tree_expectation(node: &TreeNode) -> f64 {
    match node {
        TreeNode::Leaf { value, .. } => *value,
        TreeNode::Internal {
            left,
            right,
            weight,
            ..
        } => {
            (left.weight() * tree_expectation(left) + right.weight() * tree_expectation(right))
                / weight
        }
    }
}

/// Exact attributions in polynomial time via the path-dependent tree walk.
pub fn tree_shap(e: &TreeEnsemble, sample: &[f64]) -> Result<ShapExplanation, ShapError> {
    check_ensemble(e, sample)?;
    let (scale, offset) = ensemble_scale(e);
    let mut attributions = vec![0.0; e.n_features];
    let mut base = offset;
    for tree in &e.trees {
        let mut phi = vec![0.0; e.n_features];
        let mut path = Vec::with_capacity(tree.depth() + 2);
        recurse(tree, sample, &mut phi, &mut path, 1.0, 1.0, -1);
        for (a, p) in attributions.iter_mut().zip(&phi) {
            *a += scale * p;
        }
        base += scale * tree_expectation(tree);
    }
    Ok(ShapExplanation {
        attributions,
        base_value: base,
    })
}

#[derive(Clone, Copy, Debug)]
struct PathElement {
    feature: isize,
    zero: f64,
    one: f64,
    pweight: f64,
}

fn extend(path: &mut Vec<PathElement>, zero: f64, one: f64, feature: isize) {
    let depth = path.len();
    path.push(PathElement {
        feature,
        zero,
        one,
        pweight: if depth == 0 { 1.0 } else { 0.0 },
    });
    let df = depth as f64;
    for i in (0..depth).rev() {
        path[i + 1].pweight += one * path[i].pweight * (i as f64 + 1.0) / (df + 1.0);
        path[i].pweight = zero * path[i].pweight * (df - i as f64) / (df + 1.0);
    }
}

fn unwind(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let one = path[index].one;
    let zero = path[index].zero;
    let df = depth as f64;
    let mut next = path[depth].pweight;
    if one != 0.0 {
        for i in (0..depth).rev() {
            let tmp = path[i].pweight;
            path[i].pweight = next * (df + 1.0) / ((i as f64 + 1.0) * one);
            next = tmp - path[i].pweight * zero * (df - i as f64) / (df + 1.0);
        }
    } else {
        for i in (0..depth).rev() {
            path[i].pweight = path[i].pweight * (df + 1.0) / (zero * (df - i as f64));
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero = path[i + 1].zero;
        path[i].one = path[i + 1].one;
    }
    path.pop();
}

fn unwound_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let one = path[index].one;
    let zero = path[index].zero;
    let df = depth as f64;
    let mut next = path[depth].pweight;
    let mut total = 0.0;
    if one != 0.0 {
        for i in (0..depth).rev() {
            let tmp = next * (df + 1.0) / ((i as f64 + 1.0) * one);
            total += tmp;
            next = path[i].pweight - tmp * zero * (df - i as f64) / (df + 1.0);
        }
    } else {
        for i in (0..depth).rev() {
            total += path[i].pweight * (df + 1.0) / (zero * (df - i as f64));
        }
    }
    total
}

fn recurse(
    node: &TreeNode,
    sample: &[f64],
    phi: &mut [f64],
    path: &mut Vec<PathElement>,
    zero: f64,
    one: f64,
    feature: isize,
) {
    extend(path, zero, one, feature);
    match node {
        TreeNode::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_sum(path, i);
                let el = path[i];
                phi[el.feature as usize] += w * (el.one - el.zero) * value;
            }
        }
        TreeNode::Internal {
            feature: split,
            threshold,
            left,
            right,
            weight,
        } => {
            let (hot, cold) = if sample[*split] <= *threshold {
                (left, right)
            } else {
                (right, left)
            };
            let hot_zero = hot.weight() / weight;
            let cold_zero = cold.weight() / weight;
            let mut incoming_zero = 1.0;
            let mut incoming_one = 1.0;
            if let Some(k) = path.iter().position(|el| el.feature == *split as isize) {
                incoming_zero = path[k].zero;
                incoming_one = path[k].one;
                unwind(path, k);
            }
            let mut hot_path = path.clone();
            recurse(
                hot,
                sample,
                phi,
                &mut hot_path,
                hot_zero * incoming_zero,
                incoming_one,
                *split as isize,
            );
            recurse(
                cold,
                sample,
                phi,
                path,
                cold_zero * incoming_zero,
                0.0,
                *split as isize,
            );
        }
    }
}

/// Feature count ceiling for the enumeration oracle.
pub const BRUTE_FORCE_MAX_FEATURES: usize = 12;

/// Exact Shapley values by enumerating feature subsets, with the same
/// path-dependent conditional expectations as [`tree_shap`]. Only features a
/// tree actually splits on affect its expectations, so enumeration runs over
/// those.
pub fn shap_brute_force(e: &TreeEnsemble, sample: &[f64]) -> Result<ShapExplanation, ShapError> {
    if e.n_features > BRUTE_FORCE_MAX_FEATURES {
        return Err(ShapError::TooManyFeatures {
            got: e.n_features,
            max: BRUTE_FORCE_MAX_FEATURES,
        });
    }
    check_ensemble(e, sample)?;
    let (scale, offset) = ensemble_scale(e);
    let mut attributions = vec![0.0; e.n_features];
    let mut base = offset;
    for tree in &e.trees {
        let present = tree.split_features();
        let p = present.len();
        // v(S) for every subset of the present features, by bitmask.
        let n_subsets = 1usize << p;
        let mut values = vec![0.0; n_subsets];
        for (mask, slot) in values.iter_mut().enumerate() {
            *slot = cond_expectation(tree, sample, &present, mask);
        }
        base += scale * values[0];

        let fact: Vec<f64> = {
            let mut f = vec![1.0; p + 1];
            for i in 1..=p {
                f[i] = f[i - 1] * i as f64;
            }
            f
        };
        for (bit, &feat) in present.iter().enumerate() {
            let mut phi = 0.0;
            for mask in 0..n_subsets {
                if mask & (1 << bit) != 0 {
                    continue;
                }
                let s = (mask as u32).count_ones() as usize;
                let weight = fact[s] * fact[p - s - 1] / fact[p];
                phi += weight * (values[mask | (1 << bit)] - values[mask]);
            }
            attributions[feat] += scale * phi;
        }
    }
    Ok(ShapExplanation {
        attributions,
        base_value: base,
    })
}

/// Path-dependent conditional expectation: follow the sample's branch when
/// the split feature is in the coalition, otherwise average the children by
/// their sample weights.
fn cond_expectation(node: &TreeNode, sample: &[f64], present: &[usize], mask: usize) -> f64 {
    match node {
        TreeNode::Leaf { value, .. } => *value,
        TreeNode::Internal {
            feature,
            threshold,
            left,
            right,
            weight,
        } => {
            let in_coalition = present
                .iter()
                .position(|&f| f == *feature)
                .is_some_and(|bit| mask & (1 << bit) != 0);
            if in_coalition {
                if sample[*feature] <= *threshold {
                    cond_expectation(left, sample, present, mask)
                } else {
                    cond_expectation(right, sample, present, mask)
                }
            } else {
                (left.weight() * cond_expectation(left, sample, present, mask)
                    + right.weight() * cond_expectation(right, sample, present, mask))
                    / weight
            }
        }
    }
}

/// Explain a batch of samples (parallel when the feature is on).
pub fn tree_shap_batch(
    e: &TreeEnsemble,
    samples: &[Vec<f64>],
) -> Result<Vec<ShapExplanation>, ShapError> {
    let results = maybe_par_map(samples, |s| tree_shap(e, s));
    results.into_iter().collect()
}

/// Per-class (CSAD) or pooled (standard) [min, max] attribution ranges
/// observed on benign rows, grouped by the ensemble's predicted class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapRangeTable {
    pub mode: DetectionMode,
    /// `ranges[class][feature]` in CSAD mode, `ranges[0][feature]` pooled.
    pub ranges: Vec<Vec<(f64, f64)>>,
}

impl ShapRangeTable {
    pub fn ranges_for(&self, predicted_class: usize) -> &[(f64, f64)] {
        match self.mode {
            DetectionMode::Csad => &self.ranges[predicted_class],
            DetectionMode::Standard => &self.ranges[0],
        }
    }
}

/// Build the benign range table from per-sample attributions grouped by the
/// model's predicted class (pooled in standard mode). Errors if a class
/// receives no benign rows in CSAD mode.
pub fn build_range_table(
    e: &TreeEnsemble,
    benign: &Dataset,
    mode: DetectionMode,
) -> Result<ShapRangeTable, ShapError> {
    use crate::learners::Classifier;
    if benign.n_rows() == 0 {
        return Err(ShapError::EmptyInput);
    }
    let explanations = tree_shap_batch(e, &benign.rows)?;
    let predicted: Vec<usize> = benign.rows.iter().map(|r| e.predict(r)).collect();
    let n_groups = match mode {
        DetectionMode::Csad => benign.schema.n_classes,
        DetectionMode::Standard => 1,
    };
    let d = e.n_features;
    let mut ranges = vec![vec![(f64::INFINITY, f64::NEG_INFINITY); d]; n_groups];
    let mut counts = vec![0usize; n_groups];
    for (expl, &class) in explanations.iter().zip(&predicted) {
        let group = match mode {
            DetectionMode::Csad => class,
            DetectionMode::Standard => 0,
        };
        counts[group] += 1;
        for (f, &a) in expl.attributions.iter().enumerate() {
            let cell = &mut ranges[group][f];
            cell.0 = cell.0.min(a);
            cell.1 = cell.1.max(a);
        }
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(ShapError::EmptyClass(empty));
    }
    Ok(ShapRangeTable { mode, ranges })
}

/// Importance-anomaly metrics: the share of samples with at least one
/// attribution outside the benign range, and the mean count of such
/// features per sample. Bounds are closed, so exactly-at-bound values are
/// benign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceAnomalyReport {
    pub rate: f64,
    pub avg_count: f64,
    /// Out-of-range feature count per sample, aligned with the input order.
    pub counts: Vec<usize>,
}

pub fn importance_anomaly(
    table: &ShapRangeTable,
    explanations: &[ShapExplanation],
    predicted_classes: &[usize],
) -> Result<ImportanceAnomalyReport, ShapError> {
    if explanations.is_empty() {
        return Err(ShapError::EmptyInput);
    }
    if explanations.len() != predicted_classes.len() {
        return Err(ShapError::Misaligned {
            left: explanations.len(),
            right: predicted_classes.len(),
        });
    }
    let counts: Vec<usize> = explanations
        .iter()
        .zip(predicted_classes)
        .map(|(expl, &class)| {
            let ranges = table.ranges_for(class);
            expl.attributions
                .iter()
                .zip(ranges)
                .filter(|(&a, &(lo, hi))| a < lo || a > hi)
                .count()
        })
        .collect();
    let n = counts.len() as f64;
    let rate = counts.iter().filter(|&&c| c > 0).count() as f64 / n;
    let avg_count = counts.iter().sum::<usize>() as f64 / n;
    Ok(ImportanceAnomalyReport {
        rate,
        avg_count,
        counts,
    })
}

/// Columnar CSV export of explanations for plot tooling: one row per
/// (sample id, feature, attribution).
pub fn explanations_to_csv(ids: &[usize], explanations: &[ShapExplanation]) -> String {
    let mut out = String::from("sample,feature,attribution\n");
    for (&id, expl) in ids.iter().zip(explanations) {
        for (feature, value) in expl.attributions.iter().enumerate() {
            out.push_str(&format!("{id},{feature},{value}\n"));
        }
    }
    out
}

/// Randomized tree/ensemble generator used to cross-check the fast explainer
/// against the enumeration oracle. Node weights are built leaf-up so parents
/// equal the sum of their children, as in fitted trees.
pub mod testgen {
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::learners::{EnsembleKind, TreeEnsemble, TreeNode};

    pub fn random_tree(rng: &mut ChaCha8Rng, n_features: usize, max_depth: usize) -> TreeNode {
        fn grow(rng: &mut ChaCha8Rng, n_features: usize, depth: usize) -> TreeNode {
            let make_leaf = depth == 0 || rng.gen::<f64>() < 0.3;
            if make_leaf {
                TreeNode::Leaf {
                    value: rng.gen_range(-2.0..2.0),
                    weight: rng.gen_range(1.0..10.0),
                }
            } else {
                let left = grow(rng, n_features, depth - 1);
                let right = grow(rng, n_features, depth - 1);
                let weight = left.weight() + right.weight();
                TreeNode::Internal {
                    feature: rng.gen_range(0..n_features),
                    threshold: rng.gen_range(-1.0..1.0),
                    left: Box::new(left),
                    right: Box::new(right),
                    weight,
                }
            }
        }
        grow(rng, n_features, max_depth)
    }

    pub fn random_ensemble(seed: u64, max_features: usize, max_leaves: usize) -> TreeEnsemble {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_features = rng.gen_range(2..=max_features);
        let n_trees = rng.gen_range(1..=4);
        let kind = match rng.gen_range(0..3) {
            0 => EnsembleKind::RandomForest,
            1 => EnsembleKind::GradientBoosting,
            _ => EnsembleKind::Regression,
        };
        let mut trees = Vec::with_capacity(n_trees);
        while trees.len() < n_trees {
            let tree = random_tree(&mut rng, n_features, 5);
            if tree.n_leaves() <= max_leaves {
                trees.push(tree);
            }
        }
        TreeEnsemble {
            kind,
            trees,
            base_score: rng.gen_range(-1.0..1.0),
            learning_rate: rng.gen_range(0.05..1.0),
            n_features,
        }
    }

    pub fn random_sample(seed: u64, n_features: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5A5A);
        (0..n_features).map(|_| rng.gen_range(-1.2..1.2)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::Classifier;
    use crate::schema::{Dataset, FeatureSpec, Schema};

    fn leaf(value: f64, weight: f64) -> TreeNode {
        TreeNode::Leaf { value, weight }
    }

    fn stump(feature: usize, threshold: f64, a: f64, b: f64, wl: f64, wr: f64) -> TreeNode {
        TreeNode::Internal {
            feature,
            threshold,
            left: Box::new(leaf(a, wl)),
            right: Box::new(leaf(b, wr)),
            weight: wl + wr,
        }
    }

    fn forest_of(trees: Vec<TreeNode>, n_features: usize) -> TreeEnsemble {
        TreeEnsemble {
            kind: EnsembleKind::RandomForest,
            trees,
            base_score: 0.0,
            learning_rate: 1.0,
            n_features,
        }
    }

    #[test]
    fn constant_tree_all_zero() {
        let e = forest_of(vec![leaf(0.7, 5.0)], 3);
        let expl = tree_shap(&e, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(expl.attributions, vec![0.0; 3]);
        assert!((expl.base_value - 0.7).abs() < 1e-15);
    }

    #[test]
    fn depth_one_matches_hand_formula() {
        // Leaves a (weight wl) and b (weight wr); sample routed left gets
        // attribution a - (wl*a + wr*b)/(wl+wr) on the split feature.
        let (a, b, wl, wr) = (2.0, -1.0, 3.0, 7.0);
        let e = forest_of(vec![stump(0, 0.5, a, b, wl, wr)], 2);
        let expl = tree_shap(&e, &[0.0, 9.9]).unwrap();
        let expected = a - (wl * a + wr * b) / (wl + wr);
        assert!((expl.attributions[0] - expected).abs() < 1e-12);
        assert_eq!(expl.attributions[1], 0.0);

        // Exact Shapley by subset enumeration agrees.
        let brute = shap_brute_force(&e, &[0.0, 9.9]).unwrap();
        assert!((brute.attributions[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn local_accuracy_holds() {
        for seed in 0..50 {
            let e = testgen::random_ensemble(seed, 8, 64);
            let x = testgen::random_sample(seed, e.n_features);
            let expl = tree_shap(&e, &x).unwrap();
            let margin = e.margin(&x);
            assert!(
                (expl.total() - margin).abs() <= 1e-9,
                "seed {seed}: {} vs {margin}",
                expl.total()
            );
        }
    }

    #[test]
    fn oracle_equivalence_random_ensembles() {
        for seed in 0..120 {
            let e = testgen::random_ensemble(seed, 8, 64);
            let x = testgen::random_sample(seed.wrapping_add(999), e.n_features);
            let fast = tree_shap(&e, &x).unwrap();
            let brute = shap_brute_force(&e, &x).unwrap();
            for (i, (a, b)) in fast
                .attributions
                .iter()
                .zip(&brute.attributions)
                .enumerate()
            {
                assert!(
                    (a - b).abs() <= 1e-9,
                    "seed {seed} feature {i}: fast {a} vs brute {b}"
                );
            }
            assert!((fast.base_value - brute.base_value).abs() <= 1e-9);
        }
    }

    #[test]
    fn symmetry_of_mirrored_features() {
        // x0 and x1 play identical roles; equal attributions for a sample
        // routed the same way through both.
        let inner_l = stump(1, 0.0, 1.0, 0.0, 5.0, 5.0);
        let inner_r = stump(1, 0.0, 0.0, 1.0, 5.0, 5.0);
        let tree = TreeNode::Internal {
            feature: 0,
            threshold: 0.0,
            left: Box::new(inner_l),
            right: Box::new(inner_r),
            weight: 20.0,
        };
        // f(x) = 1 iff x0 and x1 fall on the same side of zero.
        let e = forest_of(vec![tree], 2);
        let expl = tree_shap(&e, &[-1.0, -1.0]).unwrap();
        assert!(
            (expl.attributions[0] - expl.attributions[1]).abs() < 1e-12,
            "{:?}",
            expl.attributions
        );
    }

    #[test]
    fn dummy_feature_gets_zero() {
        for seed in 0..20 {
            let e = testgen::random_ensemble(seed, 5, 64);
            let mut wide = e.clone();
            wide.n_features += 2; // two features no tree splits on
            let x = testgen::random_sample(seed, wide.n_features);
            let expl = tree_shap(&wide, &x).unwrap();
            assert_eq!(expl.attributions[wide.n_features - 1], 0.0);
            assert_eq!(expl.attributions[wide.n_features - 2], 0.0);
        }
    }

    #[test]
    fn weightless_tree_rejected() {
        let e = forest_of(vec![leaf(1.0, 0.0)], 1);
        assert_eq!(
            tree_shap(&e, &[0.0]).unwrap_err(),
            ShapError::WeightlessTree
        );
    }

    #[test]
    fn brute_force_feature_cap() {
        let e = forest_of(vec![leaf(1.0, 1.0)], 13);
        assert!(matches!(
            shap_brute_force(&e, &[0.0; 13]).unwrap_err(),
            ShapError::TooManyFeatures { got: 13, max: 12 }
        ));
    }

    fn toy_dataset(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Dataset {
        let d = rows[0].len();
        let features = (0..d)
            .map(|i| FeatureSpec::continuous(&format!("f{i}"), -100.0, 100.0))
            .collect();
        let schema = Schema::new(features, "label", 2).unwrap();
        Dataset::new(schema, rows, labels).unwrap()
    }

    fn split_model() -> TreeEnsemble {
        // Predicts class 1 (prob 0.9) when x0 > 0, else 0.1.
        forest_of(vec![stump(0, 0.0, 0.1, 0.9, 10.0, 10.0)], 2)
    }

    #[test]
    fn range_table_single_sample_collapses() {
        let ds = toy_dataset(vec![vec![-1.0, 0.0], vec![1.0, 0.0]], vec![0, 1]);
        let table = build_range_table(&split_model(), &ds, DetectionMode::Csad).unwrap();
        for class in 0..2 {
            for (lo, hi) in &table.ranges[class] {
                assert_eq!(lo, hi);
            }
        }
    }

    #[test]
    fn range_table_monotone_and_nested() {
        let model = split_model();
        let small = toy_dataset(vec![vec![-1.0, 0.5], vec![1.0, -0.5]], vec![0, 1]);
        let big = toy_dataset(
            vec![
                vec![-1.0, 0.5],
                vec![1.0, -0.5],
                vec![-2.0, 1.5],
                vec![2.0, -1.5],
            ],
            vec![0, 1, 0, 1],
        );
        let t_small = build_range_table(&model, &small, DetectionMode::Csad).unwrap();
        let t_big = build_range_table(&model, &big, DetectionMode::Csad).unwrap();
        for class in 0..2 {
            for f in 0..2 {
                assert!(t_big.ranges[class][f].0 <= t_small.ranges[class][f].0);
                assert!(t_big.ranges[class][f].1 >= t_small.ranges[class][f].1);
            }
        }
        // Pooled ranges dominate per-class ranges.
        let pooled = build_range_table(&model, &big, DetectionMode::Standard).unwrap();
        for class in 0..2 {
            for f in 0..2 {
                assert!(pooled.ranges[0][f].0 <= t_big.ranges[class][f].0);
                assert!(pooled.ranges[0][f].1 >= t_big.ranges[class][f].1);
            }
        }
    }

    #[test]
    fn benign_rows_self_report_zero_anomalies() {
        let model = split_model();
        let ds = toy_dataset(
            vec![
                vec![-1.0, 0.5],
                vec![1.0, -0.5],
                vec![-2.0, 1.5],
                vec![2.0, -1.5],
            ],
            vec![0, 1, 0, 1],
        );
        let table = build_range_table(&model, &ds, DetectionMode::Csad).unwrap();
        let explanations = tree_shap_batch(&model, &ds.rows).unwrap();
        let predicted: Vec<usize> = ds.rows.iter().map(|r| model.predict(r)).collect();
        let report = importance_anomaly(&table, &explanations, &predicted).unwrap();
        assert_eq!(report.rate, 0.0);
        assert_eq!(report.avg_count, 0.0);
    }

    #[test]
    fn epsilon_above_max_is_anomalous() {
        let table = ShapRangeTable {
            mode: DetectionMode::Standard,
            ranges: vec![vec![(-1.0, 1.0), (0.0, 0.5)]],
        };
        let at_bound = ShapExplanation {
            attributions: vec![1.0, 0.5],
            base_value: 0.0,
        };
        let outside = ShapExplanation {
            attributions: vec![1.0 + 1e-9, 0.2],
            base_value: 0.0,
        };
        let report = importance_anomaly(&table, &[at_bound, outside], &[0, 0]).unwrap();
        assert_eq!(report.counts, vec![0, 1]);
        assert!((report.rate - 0.5).abs() < 1e-15);
        assert!((report.avg_count - 0.5).abs() < 1e-15);
    }

    #[test]
    fn csad_catches_cross_class_impostors_pooled_misses() {
        // Class-conditional attribution ranges are disjoint but the pooled
        // range covers both; a class-0-like sample labeled class 1 is only
        // anomalous under the class table.
        let model = split_model();
        let benign = toy_dataset(
            vec![
                vec![-1.0, 0.0],
                vec![-2.0, 0.0],
                vec![1.0, 0.0],
                vec![2.0, 0.0],
            ],
            vec![0, 0, 1, 1],
        );
        let csad = build_range_table(&model, &benign, DetectionMode::Csad).unwrap();
        let pooled = build_range_table(&model, &benign, DetectionMode::Standard).unwrap();
        // Impostor: explanation of a class-0-side sample, routed as class 1.
        let impostor = tree_shap(&model, &[-1.5, 0.0]).unwrap();
        let csad_report = importance_anomaly(&csad, std::slice::from_ref(&impostor), &[1]).unwrap();
        let pooled_report = importance_anomaly(&pooled, &[impostor], &[1]).unwrap();
        assert!(csad_report.rate >= pooled_report.rate);
        assert_eq!(csad_report.rate, 1.0);
        assert_eq!(pooled_report.rate, 0.0);
    }
}

//! Constraint projection for perturbed samples: clip to valid ranges, impose
//! realistic (typed) values, restore immutable features, and correct
//! dependent features with pretrained regression models so the sample stays
//! internally consistent.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::learners::{fit_regression_gbm, LearnError, TreeEnsemble};
use crate::schema::{Dataset, FeatureKind, Schema};

/// Per-feature rounding rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    None,
    /// Nearest integer, halves away from zero.
    NearestInt,
}

/// Clip ranges, rounding rules, and the immutable index set, all derived
/// from a schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub ranges: Vec<(f64, f64)>,
    pub rounding: Vec<Rounding>,
    /// Indices the attacker may not change (non-mutable, non-dependent).
    pub immutable: Vec<usize>,
}

impl ConstraintSet {
    pub fn from_schema(schema: &Schema) -> Self {
        let ranges = schema.features.iter().map(|f| (f.min, f.max)).collect();
        let rounding = schema
            .features
            .iter()
            .map(|f| match f.kind {
                FeatureKind::Continuous => Rounding::None,
                _ => Rounding::NearestInt,
            })
            .collect();
        let immutable = schema
            .features
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.mutable && !f.dependent)
            .map(|(i, _)| i)
            .collect();
        ConstraintSet {
            ranges,
            rounding,
            immutable,
        }
    }

    /// Tighten clip ranges to the [lower, upper] empirical percentiles of
    /// benign rows, never widening past the schema bounds. Discrete ranges
    /// keep integral endpoints.
    pub fn with_percentile_clamps(
        schema: &Schema,
        benign_rows: &[Vec<f64>],
        lower: f64,
        upper: f64,
    ) -> Self {
        let mut out = Self::from_schema(schema);
        if benign_rows.is_empty() || !(0.0..=1.0).contains(&lower) || lower >= upper {
            return out;
        }
        for (idx, range) in out.ranges.iter_mut().enumerate() {
            let mut col: Vec<f64> = benign_rows.iter().map(|r| r[idx]).collect();
            col.sort_by(|a, b| a.partial_cmp(b).expect("finite benign values"));
            let pick = |q: f64| -> f64 {
                let pos = (q * (col.len() - 1) as f64).round() as usize;
                col[pos]
            };
            let (mut lo, mut hi) = (pick(lower), pick(upper.min(1.0)));
            if out.rounding[idx] == Rounding::NearestInt {
                lo = lo.floor();
                hi = hi.ceil();
            }
            range.0 = range.0.max(lo);
            range.1 = range.1.min(hi);
            if range.0 > range.1 {
                // Degenerate column; fall back to the schema bounds.
                *range = (schema.features[idx].min, schema.features[idx].max);
            }
        }
        out
    }

    pub fn n_features(&self) -> usize {
        self.ranges.len()
    }

    fn clip(&self, idx: usize, v: f64) -> f64 {
        v.clamp(self.ranges[idx].0, self.ranges[idx].1)
    }

    fn round(&self, idx: usize, v: f64) -> f64 {
        match self.rounding[idx] {
            Rounding::None => v,
            Rounding::NearestInt => v.round(),
        }
    }

    /// Whether `sample` satisfies every range and rounding rule.
    pub fn satisfied(&self, sample: &[f64]) -> bool {
        sample.len() == self.n_features()
            && sample.iter().enumerate().all(|(i, &v)| {
                v.is_finite()
                    && v >= self.ranges[i].0
                    && v <= self.ranges[i].1
                    && (self.rounding[i] == Rounding::None || v.fract() == 0.0)
            })
    }
}

/// One regression model per dependent feature. Regressor inputs exclude
/// every dependent feature, which makes the correction order-independent
/// and idempotent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyRegistry {
    /// Dependent feature index -> regressor, ordered by index.
    models: BTreeMap<usize, TreeEnsemble>,
    /// Indices (ascending) of the features fed to every regressor.
    input_indices: Vec<usize>,
    n_features: usize,
}

impl DependencyRegistry {
    pub fn empty(n_features: usize) -> Self {
        DependencyRegistry {
            models: BTreeMap::new(),
            input_indices: (0..n_features).collect(),
            n_features,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn dependents(&self) -> impl Iterator<Item = usize> + '_ {
        self.models.keys().copied()
    }

    pub fn model(&self, feature: usize) -> Option<&TreeEnsemble> {
        self.models.get(&feature)
    }

    fn regressor_inputs(&self, sample: &[f64]) -> Vec<f64> {
        self.input_indices.iter().map(|&i| sample[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoherenceError {
    NoDependents,
    BadIndex(usize),
    NoInputsLeft,
    Learn(LearnError),
}

impl fmt::Display for CoherenceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoherenceError::NoDependents => write!(f, "no dependent features given"),
            CoherenceError::BadIndex(i) => write!(f, "dependent index {i} out of range"),
            CoherenceError::NoInputsLeft => {
                write!(
                    f,
                    "dependent set covers all features; no regressor inputs left"
                )
            }
            CoherenceError::Learn(e) => write!(f, "regressor training failed: {e}"),
        }
    }
}

impl std::error::Error for CoherenceError {}

/// Train one regressor per dependent feature on benign rows, with every
/// dependent column removed from the inputs.
pub fn fit_dependency_models(
    train: &Dataset,
    dependents: &[usize],
    n_estimators: usize,
    max_depth: usize,
    learning_rate: f64,
) -> Result<DependencyRegistry, CoherenceError> {
    let d = train.n_features();
    if dependents.is_empty() {
        return Ok(DependencyRegistry::empty(d));
    }
    let mut dep_sorted: Vec<usize> = dependents.to_vec();
    dep_sorted.sort_unstable();
    dep_sorted.dedup();
    for &idx in &dep_sorted {
        if idx >= d {
            return Err(CoherenceError::BadIndex(idx));
        }
    }
    let input_indices: Vec<usize> = (0..d).filter(|i| !dep_sorted.contains(i)).collect();
    if input_indices.is_empty() {
        return Err(CoherenceError::NoInputsLeft);
    }

    let inputs: Vec<Vec<f64>> = train
        .rows
        .iter()
        .map(|row| input_indices.iter().map(|&i| row[i]).collect())
        .collect();
    let mut models = BTreeMap::new();
    for &dep in &dep_sorted {
        let target: Vec<f64> = train.rows.iter().map(|row| row[dep]).collect();
        let model = fit_regression_gbm(&inputs, &target, n_estimators, max_depth, learning_rate)
            .map_err(CoherenceError::Learn)?;
        models.insert(dep, model);
    }
    Ok(DependencyRegistry {
        models,
        input_indices,
        n_features: d,
    })
}

/// Apply the constraint pipeline to a perturbed sample, in order: clip to
/// range, impose typed values, restore immutables to the exact original,
/// then correct each dependent feature from the regressor prediction on the
/// sample's non-dependent features (clipped and rounded per that feature's
/// rules). Total function: never fails.
pub fn tabular_modify(
    x: &[f64],
    x_adv: &[f64],
    c: &ConstraintSet,
    reg: &DependencyRegistry,
) -> Vec<f64> {
    debug_assert_eq!(x.len(), c.n_features());
    debug_assert_eq!(x_adv.len(), c.n_features());
    let mut out: Vec<f64> = x_adv.to_vec();
    for (i, v) in out.iter_mut().enumerate() {
        if !v.is_finite() {
            *v = x[i];
        }
        *v = c.clip(i, *v);
        *v = c.round(i, *v);
    }
    for &i in &c.immutable {
        out[i] = x[i];
    }
    if !reg.is_empty() {
        let inputs = reg.regressor_inputs(&out);
        let deps: Vec<usize> = reg.dependents().collect();
        for dep in deps {
            let pred = reg
                .model(dep)
                .expect("registered model")
                .predict_value(&inputs);
            let v = c.round(dep, c.clip(dep, pred));
            out[dep] = c.clip(dep, v);
        }
    }
    out
}

//! Black-box attacks: decision-based query attacks (boundary, HopSkipJump)
//! and the surrogate-gradient transfer attack, all constrained through
//! `tabular_modify` and accounted through a query-counting handle.
//!
//! Attack runs are independent per sample: each run owns its RNG and its
//! handle; the attacked model is shared read-only.

use std::cell::Cell;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::learners::Classifier;

pub mod boundary;
pub mod hopskipjump;
pub mod transfer;

pub use boundary::{boundary_attack, orthogonal_perturbation, BoundaryConfig};
pub use hopskipjump::{binary_search_boundary, estimate_update, hopskipjump_attack, HsjConfig};
pub use transfer::{
    adv_loss, compute_perturbation, correlation_table, select_features, transfer_attack,
    CorrelationTable, FeatureSelector, SelectorVariant, TransferConfig, TransferOutcome,
};

/// Wraps a classifier behind a prediction-only interface with a monotone
/// query counter: one increment per prediction, never decremented.
pub struct BlackBoxHandle<'a> {
    model: &'a dyn Classifier,
    queries: Cell<u64>,
}

impl<'a> BlackBoxHandle<'a> {
    pub fn new(model: &'a dyn Classifier) -> Self {
        BlackBoxHandle {
            model,
            queries: Cell::new(0),
        }
    }

    pub fn predict(&self, sample: &[f64]) -> usize {
        self.queries.set(self.queries.get() + 1);
        self.model.predict(sample)
    }

    pub fn predict_proba(&self, sample: &[f64]) -> f64 {
        self.queries.set(self.queries.get() + 1);
        self.model.predict_proba(sample)
    }

    pub fn queries(&self) -> u64 {
        self.queries.get()
    }

    pub fn n_features(&self) -> usize {
        self.model.n_features()
    }
}

/// One attack run's result. `success` implies the final sample is
/// misclassified by the attacked model and satisfies every constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub success: bool,
    pub x_adv: Vec<f64>,
    pub queries: u64,
    pub iterations: usize,
    /// Distances of accepted candidates to the original sample; strictly
    /// decreasing for the boundary attack, non-increasing for HopSkipJump.
    pub l2_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttackError {
    /// The model does not classify the start point as the stated label.
    InvalidStart,
    /// No misclassified seed found within the init budget.
    InitFailed,
    ZeroDistance,
    DegenerateProbes,
    PoolExhausted,
    DimensionMismatch {
        expected: usize,
        got: usize,
    },
    BadConfig(String),
    NonFinite(String),
}

impl fmt::Display for AttackError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackError::InvalidStart => {
                write!(
                    f,
                    "model does not predict the stated label on the start sample"
                )
            }
            AttackError::InitFailed => write!(f, "no misclassified init seed found"),
            AttackError::ZeroDistance => write!(f, "zero distance between sample pair"),
            AttackError::DegenerateProbes => write!(f, "degenerate probes: uniform labels"),
            AttackError::PoolExhausted => write!(f, "feature pool exhausted"),
            AttackError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            AttackError::BadConfig(msg) => write!(f, "bad configuration: {msg}"),
            AttackError::NonFinite(what) => write!(f, "non-finite value in {what}"),
        }
    }
}

impl std::error::Error for AttackError {}

pub(crate) fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Standard normal draw via Box-Muller.
pub(crate) fn standard_normal(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    use rand::Rng;
    loop {
        let u1: f64 = rng.gen();
        if u1 > f64::MIN_POSITIVE {
            let u2: f64 = rng.gen();
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

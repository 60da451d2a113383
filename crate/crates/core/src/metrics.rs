//! Attacker-risk and attacker-effort metrics: success-rate decomposition,
//! perturbation norms, query statistics, and the attack time models.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Coordinates differing by more than this (after type rounding) count
/// toward L0; discrete features are integral post-projection, so they
/// compare exactly.
pub const L0_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum MetricsError {
    LengthMismatch { left: usize, right: usize },
    EmptyLedger,
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            MetricsError::EmptyLedger => write!(f, "empty ledger"),
        }
    }
}

impl std::error::Error for MetricsError {}

/// Number of modified coordinates.
pub fn l0(x: &[f64], x_adv: &[f64]) -> Result<usize, MetricsError> {
    if x.len() != x_adv.len() {
        return Err(MetricsError::LengthMismatch {
            left: x.len(),
            right: x_adv.len(),
        });
    }
    Ok(x.iter()
        .zip(x_adv)
        .filter(|(a, b)| (*a - *b).abs() > L0_TOLERANCE)
        .count())
}

/// Euclidean perturbation distance.
pub fn l2(x: &[f64], x_adv: &[f64]) -> Result<f64, MetricsError> {
    if x.len() != x_adv.len() {
        return Err(MetricsError::LengthMismatch {
            left: x.len(),
            right: x_adv.len(),
        });
    }
    Ok(x.iter()
        .zip(x_adv)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Query,
    Transfer,
}

/// One attacked sample's accounting entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub sample_index: usize,
    pub x: Vec<f64>,
    pub x_adv: Vec<f64>,
    /// Set for transfer attacks only.
    pub surrogate_success: Option<bool>,
    /// Whether the target was misclassified; meaningful only when the
    /// target was actually queried with the final sample.
    pub target_success: bool,
    pub queries: u64,
    pub wall_time_ms: f64,
    /// Accepted-candidate distances recorded during the attack.
    #[serde(default)]
    pub l2_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunLedger {
    pub entries: Vec<LedgerEntry>,
}

impl RunLedger {
    pub fn successes(&self) -> impl Iterator<Item = &LedgerEntry> {
        self.entries.iter().filter(|e| e.target_success)
    }
}

/// Success-rate block. `transfer_sr` is absent (not zero) when no sample
/// fooled the surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessRates {
    /// Target flips over the attack set.
    pub sr: f64,
    pub surrogate_sr: Option<f64>,
    pub transfer_sr: Option<f64>,
    pub overall_sr: Option<f64>,
}

pub fn success_rates(ledger: &RunLedger, kind: AttackKind) -> Result<SuccessRates, MetricsError> {
    if ledger.entries.is_empty() {
        return Err(MetricsError::EmptyLedger);
    }
    let n = ledger.entries.len() as f64;
    match kind {
        AttackKind::Query => {
            let sr = ledger.entries.iter().filter(|e| e.target_success).count() as f64 / n;
            Ok(SuccessRates {
                sr,
                surrogate_sr: None,
                transfer_sr: None,
                overall_sr: None,
            })
        }
        AttackKind::Transfer => {
            let surrogate_flips = ledger
                .entries
                .iter()
                .filter(|e| e.surrogate_success == Some(true))
                .count();
            let both = ledger
                .entries
                .iter()
                .filter(|e| e.surrogate_success == Some(true) && e.target_success)
                .count();
            let surrogate_sr = surrogate_flips as f64 / n;
            let transfer_sr = if surrogate_flips > 0 {
                Some(both as f64 / surrogate_flips as f64)
            } else {
                None
            };
            let overall_sr = both as f64 / n;
            Ok(SuccessRates {
                sr: overall_sr,
                surrogate_sr: Some(surrogate_sr),
                transfer_sr,
                overall_sr: Some(overall_sr),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub mean: f64,
    pub median: f64,
    pub max: u64,
}

/// Statistics over per-sample query counts.
pub fn query_stats(counts: &[u64]) -> Result<QueryStats, MetricsError> {
    if counts.is_empty() {
        return Err(MetricsError::EmptyLedger);
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
    };
    Ok(QueryStats {
        mean: sorted.iter().sum::<u64>() as f64 / n as f64,
        median,
        max: *sorted.last().expect("non-empty"),
    })
}

/// Time-model inputs. The formulas are evaluated literally as printed, with
/// `queries` standing for n (query attacks) or m (surrogate queries).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortModel {
    /// n for query attacks, m (surrogate queries) for transfer attacks.
    pub queries: f64,
    /// Single-query time, seconds.
    pub t: f64,
    /// Query-time factor.
    pub alpha_q: f64,
    /// Single-optimization-iteration time.
    pub beta: f64,
    /// Surrogate training time, seconds.
    pub t_surrogate: f64,
}

/// Crafting time for a query attack: n * t^2 * alpha * beta.
pub fn time_query_attack(e: &EffortModel) -> f64 {
    e.queries * e.t * e.t * e.alpha_q * e.beta
}

/// Crafting time for a transfer attack: m * t^2 * alpha * beta +
/// T_surrogate + t.
pub fn time_transfer_attack(e: &EffortModel) -> f64 {
    e.queries * e.t * e.t * e.alpha_q * e.beta + e.t_surrogate + e.t
}

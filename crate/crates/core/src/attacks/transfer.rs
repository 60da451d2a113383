//! Untargeted transferability attack: grow a set of selected features
//! (random or importance-ranked, each pick dragging its most-correlated
//! peers along), descend the surrogate's adversarial objective on those
//! coordinates only, project constraints each round, and on a surrogate
//! flip spend the single target query.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{l2_distance, AttackError, AttackOutcome, BlackBoxHandle};
use crate::coherence::{tabular_modify, ConstraintSet, DependencyRegistry};
use crate::learners::net::{bce_loss, VecAdam};
use crate::learners::{grad_input, Classifier, SurrogateModel, TreeEnsemble};
use crate::schema::pearson;
use crate::shap::tree_shap_batch;

/// Absolute Pearson correlations among eligible (mutable, non-dependent)
/// features; pairs involving anything else, or undefined correlations, are
/// zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    abs_corr: Vec<Vec<f64>>,
}

impl CorrelationTable {
    pub fn abs_corr(&self, a: usize, b: usize) -> f64 {
        self.abs_corr[a][b]
    }
}

/// Build the table once per dataset over the given mutable feature indices.
pub fn correlation_table(rows: &[Vec<f64>], mutable: &[usize]) -> CorrelationTable {
    let d = rows.first().map_or(0, Vec::len);
    let mut abs_corr = vec![vec![0.0; d]; d];
    for (pos, &a) in mutable.iter().enumerate() {
        let col_a: Vec<f64> = rows.iter().map(|r| r[a]).collect();
        for &b in &mutable[pos + 1..] {
            let col_b: Vec<f64> = rows.iter().map(|r| r[b]).collect();
            if let Ok(r) = pearson(&col_a, &col_b) {
                abs_corr[a][b] = r.abs();
                abs_corr[b][a] = r.abs();
            }
        }
    }
    CorrelationTable { abs_corr }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SelectorVariant {
    Random,
    /// Feature indices ranked by mean |attribution| of a source ensemble
    /// over benign rows, most important first.
    Importance {
        ranking: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelector {
    pub variant: SelectorVariant,
    /// Fresh picks per selection round.
    pub k: usize,
    /// Correlated features added per pick.
    pub n_corr: usize,
    pub corr: CorrelationTable,
}

impl FeatureSelector {
    pub fn random(k: usize, n_corr: usize, corr: CorrelationTable) -> Self {
        FeatureSelector {
            variant: SelectorVariant::Random,
            k,
            n_corr,
            corr,
        }
    }

    /// Rank features by mean |attribution| of `source` over the benign rows.
    pub fn importance(
        source: &TreeEnsemble,
        benign_rows: &[Vec<f64>],
        k: usize,
        n_corr: usize,
        corr: CorrelationTable,
    ) -> Result<Self, crate::shap::ShapError> {
        let explanations = tree_shap_batch(source, benign_rows)?;
        let d = source.n_features;
        let mut mean_abs = vec![0.0; d];
        for expl in &explanations {
            for (m, &a) in mean_abs.iter_mut().zip(&expl.attributions) {
                *m += a.abs();
            }
        }
        let mut ranking: Vec<usize> = (0..d).collect();
        ranking.sort_by(|&a, &b| {
            mean_abs[b]
                .partial_cmp(&mean_abs[a])
                .expect("finite attribution means")
                .then(a.cmp(&b))
        });
        Ok(FeatureSelector {
            variant: SelectorVariant::Importance { ranking },
            k,
            n_corr,
            corr,
        })
    }
}

/// Select up to `k` new features not in `excluded` or `already`, each pick
/// adding its `n_corr` most-correlated eligible peers. The result is
/// disjoint from both input sets.
pub fn select_features(
    sel: &FeatureSelector,
    n_features: usize,
    excluded: &BTreeSet<usize>,
    already: &BTreeSet<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<BTreeSet<usize>, AttackError> {
    let eligible: Vec<usize> = (0..n_features)
        .filter(|i| !excluded.contains(i) && !already.contains(i))
        .collect();
    if eligible.is_empty() {
        return Err(AttackError::PoolExhausted);
    }
    let picks: Vec<usize> = match &sel.variant {
        SelectorVariant::Random => {
            let mut pool = eligible.clone();
            pool.shuffle(rng);
            pool.into_iter().take(sel.k).collect()
        }
        SelectorVariant::Importance { ranking } => ranking
            .iter()
            .copied()
            .filter(|i| eligible.contains(i))
            .take(sel.k)
            .collect(),
    };
    let mut chosen: BTreeSet<usize> = picks.iter().copied().collect();
    for &pick in &picks {
        let mut partners: Vec<usize> = eligible
            .iter()
            .copied()
            .filter(|&i| i != pick && !chosen.contains(&i))
            .collect();
        partners.sort_by(|&a, &b| {
            sel.corr
                .abs_corr(pick, b)
                .partial_cmp(&sel.corr.abs_corr(pick, a))
                .expect("finite correlations")
                .then(a.cmp(&b))
        });
        for partner in partners.into_iter().take(sel.n_corr) {
            chosen.insert(partner);
        }
    }
    Ok(chosen)
}

/// The adversarial objective: -BCE(M'(x_adv), y) + alpha * embedding
/// distance between x_adv and x. Minimizing drives the surrogate away from
/// the true label while penalizing latent drift.
pub fn adv_loss(
    m: &SurrogateModel,
    x_adv: &[f64],
    x: &[f64],
    y: usize,
    alpha: f64,
) -> Result<f64, AttackError> {
    if x_adv.len() != m.n_features() || x.len() != m.n_features() {
        return Err(AttackError::DimensionMismatch {
            expected: m.n_features(),
            got: x_adv.len(),
        });
    }
    let p = m.predict_proba(x_adv);
    let dist = embed_distance(m, x_adv, x);
    let value = -bce_loss(p, y as f64) + alpha * dist;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(AttackError::NonFinite("adversarial loss".into()))
    }
}

pub fn embed_distance(m: &SurrogateModel, a: &[f64], b: &[f64]) -> f64 {
    let ea = m.embed.forward(a);
    let eb = m.embed.forward(b);
    l2_distance(&ea, &eb)
}

/// One optimizer step on the objective with the gradient zeroed outside the
/// selected set; returns the update vector. Optimizer state lives in `opt`
/// and persists across rounds within one attack run.
pub fn compute_perturbation(
    m: &SurrogateModel,
    x_adv: &[f64],
    x: &[f64],
    y: usize,
    selected: &BTreeSet<usize>,
    alpha: f64,
    opt: &mut VecAdam,
) -> Result<Vec<f64>, AttackError> {
    if selected.is_empty() {
        return Err(AttackError::BadConfig("empty selected feature set".into()));
    }
    let mut grad =
        grad_input(m, x_adv, x, y, alpha).map_err(|e| AttackError::NonFinite(e.to_string()))?;
    for (i, g) in grad.iter_mut().enumerate() {
        if !selected.contains(&i) {
            *g = 0.0;
        }
    }
    let mut updated = x_adv.to_vec();
    opt.step(&mut updated, &grad);
    // Masked coordinates carry no optimizer state yet, so they are unmoved;
    // keep them bit-identical anyway.
    for i in 0..updated.len() {
        if !selected.contains(&i) {
            updated[i] = x_adv[i];
        }
    }
    Ok(updated.iter().zip(x_adv).map(|(n, o)| n - o).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    /// Selection stops once the selected set reaches this size (checked
    /// before each round). Defaults to the editable feature count.
    pub lambda_max_l0: usize,
    /// Embedding-distance regularization weight.
    pub alpha_reg: f64,
    pub learning_rate: f64,
    /// Optimizer steps between selection rounds.
    pub inner_steps: usize,
}

impl TransferConfig {
    pub fn new(lambda_max_l0: usize) -> Self {
        TransferConfig {
            lambda_max_l0,
            alpha_reg: 1.0,
            learning_rate: 1.0,
            inner_steps: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferOutcome {
    pub outcome: AttackOutcome,
    pub surrogate_success: bool,
    pub transfer_success: bool,
    /// Latent-space displacement of the returned sample.
    pub embed_distance: f64,
    /// Surrogate forward evaluations spent (predictions plus gradient
    /// steps); the m of the transfer time model.
    pub surrogate_evals: u64,
}

/// Run the transfer attack: optimize against the surrogate under the L0
/// budget, then query the target exactly once if the surrogate flipped.
#[allow(clippy::too_many_arguments)]
pub fn transfer_attack(
    surrogate: &SurrogateModel,
    target: &BlackBoxHandle<'_>,
    x: &[f64],
    y: usize,
    cfg: &TransferConfig,
    sel: &FeatureSelector,
    c: &ConstraintSet,
    reg: &DependencyRegistry,
    rng: &mut ChaCha8Rng,
) -> Result<TransferOutcome, AttackError> {
    if cfg.lambda_max_l0 == 0 {
        return Err(AttackError::BadConfig("lambda_max_l0 must be >= 1".into()));
    }
    if cfg.inner_steps == 0 {
        return Err(AttackError::BadConfig("inner_steps must be >= 1".into()));
    }
    if surrogate.n_features() != x.len() {
        return Err(AttackError::DimensionMismatch {
            expected: surrogate.n_features(),
            got: x.len(),
        });
    }
    let mut surrogate_evals = 1u64;
    if surrogate.predict(x) != y {
        return Err(AttackError::InvalidStart);
    }

    // Immutable and dependent features are never directly perturbed.
    let mut excluded: BTreeSet<usize> = c.immutable.iter().copied().collect();
    excluded.extend(reg.dependents());

    let mut x_adv = x.to_vec();
    let mut selected: BTreeSet<usize> = BTreeSet::new();
    let mut opt = VecAdam::new(x.len(), cfg.learning_rate);
    let mut trace = Vec::new();
    let mut iterations = 0usize;

    loop {
        surrogate_evals += 1;
        if surrogate.predict(&x_adv) != y || selected.len() >= cfg.lambda_max_l0 {
            break;
        }
        match select_features(sel, x.len(), &excluded, &selected, rng) {
            Ok(new) => selected.extend(new),
            Err(AttackError::PoolExhausted) => break,
            Err(e) => return Err(e),
        }
        for _ in 0..cfg.inner_steps {
            let update =
                compute_perturbation(surrogate, &x_adv, x, y, &selected, cfg.alpha_reg, &mut opt)?;
            surrogate_evals += 1;
            for (xi, u) in x_adv.iter_mut().zip(&update) {
                *xi += u;
            }
        }
        x_adv = tabular_modify(x, &x_adv, c, reg);
        trace.push(l2_distance(x, &x_adv));
        iterations += 1;
    }

    surrogate_evals += 1;
    let surrogate_success = surrogate.predict(&x_adv) != y;
    let mut transfer_success = false;
    if surrogate_success {
        transfer_success = target.predict(&x_adv) != y;
    }
    let success = surrogate_success && transfer_success && c.satisfied(&x_adv);
    let embed_dist = embed_distance(surrogate, &x_adv, x);
    Ok(TransferOutcome {
        outcome: AttackOutcome {
            success,
            x_adv,
            queries: target.queries(),
            iterations,
            l2_trace: trace,
        },
        surrogate_success,
        transfer_success,
        embed_distance: embed_dist,
        surrogate_evals,
    })
}

//! Boundary attack: random misclassified init, then orthogonal steps along
//! the sphere around the original with a contraction toward it, accepting
//! only candidates that stay misclassified and strictly shrink the distance.

use rand_chacha::ChaCha8Rng;

use super::{l2_distance, standard_normal, AttackError, AttackOutcome, BlackBoxHandle};
use crate::coherence::{tabular_modify, ConstraintSet, DependencyRegistry};

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryConfig {
    /// Base contraction step toward the original.
    pub epsilon: f64,
    /// Base orthogonal step along the sphere.
    pub delta: f64,
    pub max_iter: usize,
    /// Adaptation window: step scales adjust from the acceptance rate over
    /// each window of this many candidates.
    pub num_trials: usize,
    pub step_adaptation: f64,
    pub max_init_steps: usize,
    /// Optional early stop once 1 - |x - x_adv| / (|x| + 1) reaches this;
    /// `None` runs the full iteration budget.
    pub similarity_threshold: Option<f64>,
    /// Per-feature init distribution statistics, fitted on the attacker's
    /// benign data.
    pub init_mean: Vec<f64>,
    pub init_std: Vec<f64>,
}

impl BoundaryConfig {
    pub fn new(init_mean: Vec<f64>, init_std: Vec<f64>) -> Self {
        BoundaryConfig {
            epsilon: 1.0,
            delta: 1.0,
            max_iter: 3000,
            num_trials: 20,
            step_adaptation: 1.0,
            max_init_steps: 100,
            similarity_threshold: None,
            init_mean,
            init_std,
        }
    }

    fn validate(&self, dim: usize) -> Result<(), AttackError> {
        if self.epsilon <= 0.0 || self.delta <= 0.0 || self.step_adaptation <= 0.0 {
            return Err(AttackError::BadConfig("step sizes must be positive".into()));
        }
        if self.max_iter == 0 || self.num_trials == 0 || self.max_init_steps == 0 {
            return Err(AttackError::BadConfig(
                "iteration budgets must be positive".into(),
            ));
        }
        if self.init_mean.len() != dim || self.init_std.len() != dim {
            return Err(AttackError::DimensionMismatch {
                expected: dim,
                got: self.init_mean.len(),
            });
        }
        Ok(())
    }
}

/// Draw a direction orthogonal to (x - x_adv), move along the sphere of
/// radius |x - x_adv| around x by `delta` of that radius, then contract
/// toward x by the `epsilon` fraction. The pre-contraction point lies on the
/// sphere exactly (up to rounding).
pub fn orthogonal_perturbation(
    x: &[f64],
    x_adv: &[f64],
    delta: f64,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, AttackError> {
    let spherical = spherical_candidate(x, x_adv, delta, rng)?;
    let contraction = epsilon.min(0.999_999);
    Ok(x.iter()
        .zip(&spherical)
        .map(|(&xi, &si)| xi + (1.0 - contraction) * (si - xi))
        .collect())
}

/// The orthogonal step before contraction; exactly on the sphere around x.
pub fn spherical_candidate(
    x: &[f64],
    x_adv: &[f64],
    delta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, AttackError> {
    let dist = l2_distance(x, x_adv);
    if dist == 0.0 {
        return Err(AttackError::ZeroDistance);
    }
    let d: Vec<f64> = x_adv.iter().zip(x).map(|(a, b)| a - b).collect();
    for _ in 0..16 {
        let u: Vec<f64> = (0..x.len()).map(|_| standard_normal(rng)).collect();
        let dot: f64 = u.iter().zip(&d).map(|(a, b)| a * b).sum();
        let mut perp: Vec<f64> = u
            .iter()
            .zip(&d)
            .map(|(ui, di)| ui - dot * di / (dist * dist))
            .collect();
        let norm = perp.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        for v in &mut perp {
            *v *= delta * dist / norm;
        }
        let stepped: Vec<f64> = x_adv.iter().zip(&perp).map(|(a, p)| a + p).collect();
        // Project back onto the sphere around x.
        let stepped_dist = l2_distance(x, &stepped);
        if stepped_dist == 0.0 {
            continue;
        }
        return Ok(x
            .iter()
            .zip(&stepped)
            .map(|(&xi, &si)| xi + (si - xi) * dist / stepped_dist)
            .collect());
    }
    Err(AttackError::DegenerateProbes)
}

/// Run the attack. The caller guarantees `m` classifies `x` as `y`; the
/// first query re-verifies that.
pub fn boundary_attack(
    m: &BlackBoxHandle<'_>,
    x: &[f64],
    y: usize,
    cfg: &BoundaryConfig,
    c: &ConstraintSet,
    reg: &DependencyRegistry,
    rng: &mut ChaCha8Rng,
) -> Result<AttackOutcome, AttackError> {
    cfg.validate(x.len())?;
    if m.n_features() != x.len() {
        return Err(AttackError::DimensionMismatch {
            expected: m.n_features(),
            got: x.len(),
        });
    }
    if m.predict(x) != y {
        return Err(AttackError::InvalidStart);
    }

    // Init: per-feature normal draws, constrained before each query.
    let mut incumbent: Option<Vec<f64>> = None;
    for _ in 0..cfg.max_init_steps {
        let raw: Vec<f64> = cfg
            .init_mean
            .iter()
            .zip(&cfg.init_std)
            .map(|(&mu, &sigma)| mu + sigma * standard_normal(rng))
            .collect();
        let cand = tabular_modify(x, &raw, c, reg);
        if m.predict(&cand) != y {
            incumbent = Some(cand);
            break;
        }
    }
    let mut incumbent = incumbent.ok_or(AttackError::InitFailed)?;
    let mut best_dist = l2_distance(x, &incumbent);
    let mut trace = vec![best_dist];

    let mut delta_scale = 1.0f64;
    let mut eps_scale = 1.0f64;
    let mut window_accepts = 0usize;
    let mut iterations = 0usize;

    for it in 0..cfg.max_iter {
        iterations = it + 1;
        if best_dist == 0.0 {
            break;
        }
        let delta_eff = (cfg.delta * delta_scale).clamp(1e-9, 1e3);
        let eps_eff = (cfg.epsilon * eps_scale).clamp(1e-9, 0.999);
        let cand = match orthogonal_perturbation(x, &incumbent, delta_eff, eps_eff, rng) {
            Ok(cand) => cand,
            Err(AttackError::DegenerateProbes) => continue,
            Err(e) => return Err(e),
        };
        let mut accepted = false;
        if m.predict(&cand) != y && l2_distance(x, &cand) < best_dist {
            let fixed = tabular_modify(x, &cand, c, reg);
            let fixed_dist = l2_distance(x, &fixed);
            if fixed_dist < best_dist && m.predict(&fixed) != y {
                incumbent = fixed;
                best_dist = fixed_dist;
                trace.push(best_dist);
                accepted = true;
            }
        }
        if accepted {
            window_accepts += 1;
        }
        if (it + 1) % cfg.num_trials == 0 {
            let rate = window_accepts as f64 / cfg.num_trials as f64;
            // Bolder when acceptances are plentiful, more cautious when rare.
            if rate > 0.5 {
                eps_scale = (eps_scale * 1.3f64.powf(cfg.step_adaptation)).min(1.0);
                delta_scale = (delta_scale * 1.1f64.powf(cfg.step_adaptation)).min(1e3);
            } else if rate < 0.2 {
                eps_scale = (eps_scale * 0.6f64.powf(cfg.step_adaptation)).max(1e-9);
                delta_scale = (delta_scale * 0.85f64.powf(cfg.step_adaptation)).max(1e-9);
            }
            window_accepts = 0;
        }
        if let Some(alpha_sim) = cfg.similarity_threshold {
            let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if 1.0 - best_dist / (x_norm + 1.0) >= alpha_sim {
                break;
            }
        }
    }

    let success = c.satisfied(&incumbent) && m.predict(&incumbent) != y;
    Ok(AttackOutcome {
        success,
        x_adv: incumbent,
        queries: m.queries(),
        iterations,
        l2_trace: trace,
    })
}

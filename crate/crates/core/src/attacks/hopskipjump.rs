//! HopSkipJump: binary search onto the decision boundary, Monte-Carlo
//! gradient-direction estimation from label-only probes, and a geometric
//! step-size search, constrained once per outer iteration.

use rand_chacha::ChaCha8Rng;

use super::{l2_distance, standard_normal, AttackError, AttackOutcome, BlackBoxHandle};
use crate::coherence::{tabular_modify, ConstraintSet, DependencyRegistry};

#[derive(Debug, Clone, PartialEq)]
pub struct HsjConfig {
    pub max_iter: usize,
    /// Total probe ceiling per gradient estimate.
    pub max_eval: usize,
    /// Probe count at the first iteration; grows with sqrt(iteration).
    pub init_eval: usize,
    /// Init draws before giving up on finding a misclassified seed.
    pub init_size: usize,
    /// Binary-search interval width (absolute L2).
    pub bs_tol: f64,
    pub init_mean: Vec<f64>,
    pub init_std: Vec<f64>,
}

impl HsjConfig {
    pub fn new(init_mean: Vec<f64>, init_std: Vec<f64>) -> Self {
        HsjConfig {
            max_iter: 50,
            max_eval: 10_000,
            init_eval: 500,
            init_size: 100,
            bs_tol: 1e-6,
            init_mean,
            init_std,
        }
    }

    fn validate(&self, dim: usize) -> Result<(), AttackError> {
        if self.init_eval > self.max_eval {
            return Err(AttackError::BadConfig(
                "init_eval must be <= max_eval".into(),
            ));
        }
        if self.init_eval < 2 {
            return Err(AttackError::BadConfig("init_eval must be >= 2".into()));
        }
        if self.max_iter == 0 || self.init_size == 0 {
            return Err(AttackError::BadConfig(
                "iteration budgets must be positive".into(),
            ));
        }
        if self.bs_tol <= 0.0 {
            return Err(AttackError::BadConfig("bs_tol must be positive".into()));
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

/// Bisect the segment from `x` (classified `y`) to `x_adv` (misclassified)
/// until the bracket is narrower than `tol`; returns the misclassified
/// endpoint. Both endpoints are re-verified first.
pub fn binary_search_boundary(
    m: &BlackBoxHandle<'_>,
    x: &[f64],
    x_adv: &[f64],
    y: usize,
    tol: f64,
) -> Result<Vec<f64>, AttackError> {
    if x.len() != x_adv.len() {
        return Err(AttackError::DimensionMismatch {
            expected: x.len(),
            got: x_adv.len(),
        });
    }
    if m.predict(x) != y || m.predict(x_adv) == y {
        return Err(AttackError::InvalidStart);
    }
    let seg_len = l2_distance(x, x_adv);
    if seg_len <= tol {
        return Ok(x_adv.to_vec());
    }
    let point = |t: f64| -> Vec<f64> {
        x.iter()
            .zip(x_adv)
            .map(|(&a, &b)| a + t * (b - a))
            .collect()
    };
    let mut lo = 0.0f64; // classified y
    let mut hi = 1.0f64; // misclassified
    while (hi - lo) * seg_len > tol {
        let mid = 0.5 * (lo + hi);
        if m.predict(&point(mid)) != y {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(point(hi))
}

/// Monte-Carlo gradient-direction estimate at a boundary point: random unit
/// probes at `radius`, labeled +1/-1 by misclassification, baseline
/// subtracted, averaged, and normalized. Uniform probe labels are an error
/// so the caller can enlarge the radius.
pub fn estimate_update(
    m: &BlackBoxHandle<'_>,
    x_boundary: &[f64],
    y: usize,
    n_eval: usize,
    radius: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, AttackError> {
    if n_eval < 2 {
        return Err(AttackError::BadConfig("n_eval must be >= 2".into()));
    }
    let d = x_boundary.len();
    let mut directions = Vec::with_capacity(n_eval);
    let mut signs = Vec::with_capacity(n_eval);
    for _ in 0..n_eval {
        let mut u: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        for v in &mut u {
            *v /= norm;
        }
        let probe: Vec<f64> = x_boundary
            .iter()
            .zip(&u)
            .map(|(&c, &ui)| c + radius * ui)
            .collect();
        let sign = if m.predict(&probe) != y { 1.0 } else { -1.0 };
        directions.push(u);
        signs.push(sign);
    }
    let mean = signs.iter().sum::<f64>() / signs.len() as f64;
    if mean == 1.0 || mean == -1.0 {
        return Err(AttackError::DegenerateProbes);
    }
    let mut v = vec![0.0; d];
    for (u, &s) in directions.iter().zip(&signs) {
        let w = s - mean;
        for (vi, &ui) in v.iter_mut().zip(u) {
            *vi += w * ui;
        }
    }
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(AttackError::DegenerateProbes);
    }
    for vi in &mut v {
        *vi /= norm;
    }
    Ok(v)
}

/// Run the attack. Each iteration: binary search to the boundary, gradient
/// estimate with a probe budget growing toward `max_eval`, geometric step
/// halving until misclassified, then constraint projection; a candidate is
/// accepted only if it stays misclassified without growing the distance.
pub fn hopskipjump_attack(
    m: &BlackBoxHandle<'_>,
    x: &[f64],
    y: usize,
    cfg: &HsjConfig,
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

    let mut incumbent: Option<Vec<f64>> = None;
    for _ in 0..cfg.init_size {
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
    let dim = x.len() as f64;
    let mut iterations = 0usize;

    for t in 1..=cfg.max_iter {
        iterations = t;
        if best_dist == 0.0 {
            break;
        }
        let x_bs = binary_search_boundary(m, x, &incumbent, y, cfg.bs_tol)?;
        let bs_dist = l2_distance(x, &x_bs);
        let n_eval = ((cfg.init_eval as f64 * (t as f64).sqrt()) as usize)
            .clamp(cfg.init_eval, cfg.max_eval);

        // Gradient-direction estimate; enlarge the probe radius when the
        // labels come back uniform.
        let mut radius = (bs_dist / dim.sqrt()).max(cfg.bs_tol);
        let mut direction = None;
        for _ in 0..4 {
            match estimate_update(m, &x_bs, y, n_eval, radius, rng) {
                Ok(dir) => {
                    direction = Some(dir);
                    break;
                }
                Err(AttackError::DegenerateProbes) => radius *= 10.0,
                Err(e) => return Err(e),
            }
        }
        let Some(direction) = direction else {
            continue;
        };

        // Geometric step-size search: halve until the stepped point is
        // misclassified.
        let mut step = bs_dist / (t as f64).sqrt();
        let mut stepped = None;
        while step > 1e-12 * (1.0 + bs_dist) {
            let cand: Vec<f64> = x_bs
                .iter()
                .zip(&direction)
                .map(|(&b, &d)| b + step * d)
                .collect();
            if m.predict(&cand) != y {
                stepped = Some(cand);
                break;
            }
            step *= 0.5;
        }
        let cand = stepped.unwrap_or_else(|| x_bs.clone());
        let fixed = tabular_modify(x, &cand, c, reg);
        let fixed_dist = l2_distance(x, &fixed);
        if fixed_dist <= best_dist && m.predict(&fixed) != y {
            incumbent = fixed;
            best_dist = fixed_dist;
            trace.push(best_dist);
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

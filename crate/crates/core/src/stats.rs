//! Nonparametric statistical machinery: Mann-Whitney U, two-proportion z,
//! exact McNemar, Wilcoxon signed-rank, Holm's step-down correction, and
//! S/M/L effect-size categories.
//!
//! Small samples use exact null distributions (subset / sign-pattern
//! counting); larger samples fall back to tie-corrected normal
//! approximations. All tests are two-sided with the doubled-smaller-tail
//! convention, capped at 1.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Sample-size ceiling for exact enumeration (pooled size for Mann-Whitney,
/// nonzero differences for Wilcoxon).
pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub enum StatsError {
    EmptyInput,
    AllZeroDifferences,
    BadProportion { k: u64, n: u64 },
    ZeroObservations,
    OutOfRangeP(f64),
    UnknownKind,
}

impl fmt::Display for StatsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatsError::EmptyInput => write!(f, "empty input"),
            StatsError::AllZeroDifferences => write!(f, "all differences are zero"),
            StatsError::BadProportion { k, n } => write!(f, "invalid proportion {k}/{n}"),
            StatsError::ZeroObservations => write!(f, "no observations"),
            StatsError::OutOfRangeP(p) => write!(f, "p-value {p} outside [0, 1]"),
            StatsError::UnknownKind => write!(f, "unknown effect size kind"),
        }
    }
}

impl std::error::Error for StatsError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    CliffsDelta,
    CohensH,
    CohensG,
    RankBiserial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EffectCategory {
    S,
    M,
    L,
}

/// One statistical comparison. `p_adjusted` starts equal to `p_raw` and is
/// rewritten by [`holm_adjust_results`]; `significant` always reflects
/// `p_adjusted < 0.05`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub test: String,
    pub statistic: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub effect_value: f64,
    pub effect_kind: EffectKind,
    pub category: EffectCategory,
    pub significant: bool,
    /// McNemar only: the doubled-range convention of Cohen's g, exposed
    /// alongside the standard [0, 1/2] value.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub doubled_g: Option<f64>,
}

impl StatResult {
    fn new(test: &str, statistic: f64, p: f64, effect_value: f64, kind: EffectKind) -> Self {
        StatResult {
            test: test.to_string(),
            statistic,
            p_raw: p,
            p_adjusted: p,
            effect_value,
            effect_kind: kind,
            category: effect_size_category(effect_value, kind),
            significant: p < 0.05,
            doubled_g: None,
        }
    }
}

/// |value| thresholds for the three-way S/M/L labeling; values below the
/// small threshold still report S.
pub fn effect_size_category(value: f64, kind: EffectKind) -> EffectCategory {
    let (medium, large) = match kind {
        EffectKind::CliffsDelta => (0.33, 0.474),
        EffectKind::CohensH => (0.5, 0.8),
        EffectKind::CohensG => (0.15, 0.25),
        EffectKind::RankBiserial => (0.3, 0.5),
    };
    let v = value.abs();
    if v >= large {
        EffectCategory::L
    } else if v >= medium {
        EffectCategory::M
    } else {
        EffectCategory::S
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Abramowitz-Stegun 7.1.26 rational approximation, |error| < 1.5e-7.
fn erf(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let sign = x.signum();
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.327_591_1 * x);
    let poly = t
        * (0.254_829_592
            + t * (-0.284_496_736
                + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    sign * (1.0 - poly * (-x * x).exp())
}

fn two_sided_from_z(z: f64) -> f64 {
    (2.0 * (1.0 - normal_cdf(z.abs()))).clamp(0.0, 1.0)
}

/// Midranks of the pooled sample, doubled so tied ranks stay integral.
fn doubled_midranks(sorted: &[f64]) -> Vec<u64> {
    let n = sorted.len();
    let mut out = vec![0u64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share the midrank; doubled midrank = i+j+2.
        let doubled = (i + j + 2) as u64;
        for slot in out.iter_mut().take(j + 1).skip(i) {
            *slot = doubled;
        }
        i = j + 1;
    }
    out
}

/// Tie-correction term sum(t^3 - t) over tie groups.
fn tie_term(sorted: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        total += t * t * t - t;
        i = j + 1;
    }
    total
}

/// Mann-Whitney U with Cliff's delta. Exact subset-count null distribution
/// when the pooled size is at most [`EXACT_LIMIT`], tie-corrected normal
/// approximation with continuity correction beyond.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<StatResult, StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let n1 = x.len();
    let n2 = y.len();

    // U = #{x_i > y_j} + 0.5 #{x_i = y_j}; delta from the same counts.
    let mut greater = 0u64;
    let mut less = 0u64;
    let mut equal = 0u64;
    for &a in x {
        for &b in y {
            if a > b {
                greater += 1;
            } else if a < b {
                less += 1;
            } else {
                equal += 1;
            }
        }
    }
    let u = greater as f64 + 0.5 * equal as f64;
    let delta = (greater as f64 - less as f64) / (n1 as f64 * n2 as f64);

    let mut pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));

    let p = if n1 + n2 <= EXACT_LIMIT {
        exact_mwu_p(x, &pooled, n1)
    } else {
        let n1f = n1 as f64;
        let n2f = n2 as f64;
        let nf = n1f + n2f;
        let mean = n1f * n2f / 2.0;
        let ties = tie_term(&pooled);
        let var = n1f * n2f / 12.0 * ((nf + 1.0) - ties / (nf * (nf - 1.0)));
        if var <= 0.0 {
            1.0
        } else {
            let z = (u - mean).abs().max(0.5) - 0.5; // continuity correction
            two_sided_from_z(z / var.sqrt())
        }
    };

    Ok(StatResult::new(
        "mann_whitney_u",
        u,
        p,
        delta,
        EffectKind::CliffsDelta,
    ))
}

/// Exact two-sided p by counting size-n1 subsets of the pooled sample whose
/// rank sum reaches at least / at most the observed one.
fn exact_mwu_p(x: &[f64], pooled_sorted: &[f64], n1: usize) -> f64 {
    let doubled = doubled_midranks(pooled_sorted);
    // Observed doubled rank sum of group x.
    let mut remaining: Vec<u64> = doubled.clone();
    let mut pool_vals: Vec<f64> = pooled_sorted.to_vec();
    let mut obs_doubled_rank_sum = 0u64;
    for &a in x {
        let pos = pool_vals
            .iter()
            .position(|&v| v == a)
            .expect("sample value present in pool");
        obs_doubled_rank_sum += remaining[pos];
        pool_vals.remove(pos);
        remaining.remove(pos);
    }

    // ways[j][s]: subsets of size j with doubled rank sum s.
    let max_sum: usize = doubled.iter().sum::<u64>() as usize;
    let mut ways = vec![vec![0f64; max_sum + 1]; n1 + 1];
    ways[0][0] = 1.0;
    for &r in &doubled {
        for j in (0..n1).rev() {
            for s in 0..=(max_sum - r as usize) {
                if ways[j][s] > 0.0 {
                    ways[j + 1][s + r as usize] += ways[j][s];
                }
            }
        }
    }

    // Doubled rank sum maps affinely to U; compare on rank sums directly.
    let total: f64 = ways[n1].iter().sum();
    let obs = obs_doubled_rank_sum as usize;
    let at_most: f64 = ways[n1][..=obs].iter().sum();
    let at_least: f64 = ways[n1][obs..].iter().sum();
    (2.0 * (at_most.min(at_least)) / total).min(1.0)
}

/// Pooled two-sided z-test for two proportions, with Cohen's h.
pub fn proportions_ztest(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<StatResult, StatsError> {
    if n1 == 0 || n2 == 0 {
        return Err(StatsError::ZeroObservations);
    }
    if k1 > n1 {
        return Err(StatsError::BadProportion { k: k1, n: n1 });
    }
    if k2 > n2 {
        return Err(StatsError::BadProportion { k: k2, n: n2 });
    }
    let p1 = k1 as f64 / n1 as f64;
    let p2 = k2 as f64 / n2 as f64;
    let pooled = (k1 + k2) as f64 / (n1 + n2) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    let (z, p) = if se == 0.0 {
        (0.0, 1.0)
    } else {
        let z = (p1 - p2) / se;
        (z, two_sided_from_z(z))
    };
    let h = 2.0 * p1.sqrt().asin() - 2.0 * p2.sqrt().asin();
    Ok(StatResult::new(
        "proportions_ztest",
        z,
        p,
        h,
        EffectKind::CohensH,
    ))
}

/// Exact McNemar test on the discordant-pair counts, with Cohen's g in its
/// standard [0, 1/2] range and the doubled variant exposed alongside.
pub fn mcnemar_exact(b: u64, c: u64) -> Result<StatResult, StatsError> {
    let n = b + c;
    if n == 0 {
        return Err(StatsError::ZeroObservations);
    }
    let k = b.min(c);
    let p = (2.0 * binomial_cdf_half(k, n)).min(1.0);
    let g = b.max(c) as f64 / n as f64 - 0.5;
    let mut result = StatResult::new("mcnemar_exact", k as f64, p, g, EffectKind::CohensG);
    result.doubled_g = Some(2.0 * g);
    Ok(result)
}

/// P(X <= k) for X ~ Binomial(n, 1/2). Exact summation below 50 trials,
/// log-space beyond.
fn binomial_cdf_half(k: u64, n: u64) -> f64 {
    if n <= 50 {
        let scale = 0.5f64.powi(n as i32);
        let mut coeff = 1.0f64; // C(n, 0)
        let mut total = coeff;
        for i in 1..=k {
            coeff = coeff * (n - i + 1) as f64 / i as f64;
            total += coeff;
        }
        total * scale
    } else {
        let ln_half = std::f64::consts::LN_2;
        (0..=k)
            .map(|i| (ln_choose(n, i) - n as f64 * ln_half).exp())
            .sum::<f64>()
            .min(1.0)
    }
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Lanczos approximation (g = 7, n = 9).
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Wilcoxon signed-rank test on paired differences, with the rank-biserial
/// correlation. Zero differences are dropped; ranks are tie-averaged. Exact
/// sign-pattern null distribution up to [`EXACT_LIMIT`] nonzero differences,
/// normal approximation beyond.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<StatResult, StatsError> {
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(StatsError::AllZeroDifferences);
    }
    let n = nonzero.len();
    let mut abs_sorted: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    abs_sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite differences"));
    let doubled = doubled_midranks(&abs_sorted);

    // Doubled rank of each difference, in input order.
    let mut pool = abs_sorted.clone();
    let mut pool_ranks: Vec<u64> = doubled.clone();
    let mut w_plus_doubled = 0u64;
    let mut w_minus_doubled = 0u64;
    for &d in &nonzero {
        let pos = pool
            .iter()
            .position(|&v| v == d.abs())
            .expect("difference present");
        if d > 0.0 {
            w_plus_doubled += pool_ranks[pos];
        } else {
            w_minus_doubled += pool_ranks[pos];
        }
        pool.remove(pos);
        pool_ranks.remove(pos);
    }
    let w_plus = w_plus_doubled as f64 / 2.0;
    let w_minus = w_minus_doubled as f64 / 2.0;
    let r = (w_plus - w_minus) / (w_plus + w_minus);

    let p = if n <= EXACT_LIMIT {
        // DP over doubled ranks: counts of sign patterns by doubled W+.
        let max_sum: usize = doubled.iter().sum::<u64>() as usize;
        let mut ways = vec![0f64; max_sum + 1];
        ways[0] = 1.0;
        for &rk in &doubled {
            for s in (0..=(max_sum - rk as usize)).rev() {
                if ways[s] > 0.0 {
                    ways[s + rk as usize] += ways[s];
                }
            }
        }
        let total: f64 = ways.iter().sum();
        let obs = w_plus_doubled as usize;
        let at_most: f64 = ways[..=obs].iter().sum();
        let at_least: f64 = ways[obs..].iter().sum();
        (2.0 * at_most.min(at_least) / total).min(1.0)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let ties = tie_term(&abs_sorted);
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
        if var <= 0.0 {
            1.0
        } else {
            let z = (w_plus - mean).abs().max(0.5) - 0.5;
            two_sided_from_z(z / var.sqrt())
        }
    };

    Ok(StatResult::new(
        "wilcoxon_signed_rank",
        w_plus,
        p,
        r,
        EffectKind::RankBiserial,
    ))
}

/// Holm's step-down adjustment: sort ascending, take the running maximum of
/// (m - j + 1) * p_(j) capped at 1, and map back to input order.
pub fn holm_adjust(p_values: &[f64]) -> Result<Vec<f64>, StatsError> {
    for &p in p_values {
        if !(0.0..=1.0).contains(&p) {
            return Err(StatsError::OutOfRangeP(p));
        }
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].partial_cmp(&p_values[b]).expect("finite p"));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &idx) in order.iter().enumerate() {
        let scaled = ((m - rank) as f64 * p_values[idx]).min(1.0);
        running = running.max(scaled);
        adjusted[idx] = running;
    }
    Ok(adjusted)
}

/// Apply Holm across a family of results, rewriting `p_adjusted` and the
/// significance flags.
pub fn holm_adjust_results(results: &mut [StatResult]) -> Result<(), StatsError> {
    let raw: Vec<f64> = results.iter().map(|r| r.p_raw).collect();
    let adjusted = holm_adjust(&raw)?;
    for (r, p) in results.iter_mut().zip(adjusted) {
        r.p_adjusted = p;
        r.significant = p < 0.05;
    }
    Ok(())
}

/// Within-group heterogeneity indicator: whether any Holm-adjusted pairwise
/// comparison in the group is significant.
pub fn any_significant(results: &[StatResult]) -> bool {
    results.iter().any(|r| r.significant)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mwu_pairwise_counting() {
        // Enumerate all 4 pairs by hand: no x exceeds any y.
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.effect_value, -1.0);
        assert_eq!(r.category, EffectCategory::L);
    }

    #[test]
    fn mwu_identical_groups_delta_zero() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(r.effect_value, 0.0);
        assert!((r.p_raw - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mwu_dominance_delta_one() {
        let r = mann_whitney_u(&[10.0, 11.0], &[1.0, 2.0]).unwrap();
        assert_eq!(r.effect_value, 1.0);
    }

    /// Oracle: enumerate every size-n1 subset of the pooled values as the
    /// "x" group and count rank sums at least/at most the observed.
    fn brute_force_mwu_p(x: &[f64], y: &[f64]) -> f64 {
        let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
        let n = pooled.len();
        let n1 = x.len();
        let mut sorted = pooled.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // midranks per pooled index
        let rank_of = |v: f64| -> f64 {
            let lo = sorted.iter().filter(|&&s| s < v).count();
            let eq = sorted.iter().filter(|&&s| s == v).count();
            (2 * lo + eq + 1) as f64 / 2.0
        };
        let obs: f64 = x.iter().map(|&v| rank_of(v)).sum();
        let mut le = 0u64;
        let mut ge = 0u64;
        let mut total = 0u64;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != n1 {
                continue;
            }
            let sum: f64 = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| rank_of(pooled[i]))
                .sum();
            total += 1;
            if sum <= obs + 1e-9 {
                le += 1;
            }
            if sum >= obs - 1e-9 {
                ge += 1;
            }
        }
        (2.0 * (le.min(ge)) as f64 / total as f64).min(1.0)
    }

    #[test]
    fn mwu_exact_matches_enumeration() {
        let cases: Vec<(Vec<f64>, Vec<f64>)> = vec![
            (vec![1.0, 2.0], vec![3.0, 4.0]),
            (vec![5.0, 1.0, 4.0], vec![2.0, 3.0]),
            (vec![1.0, 1.0, 2.0], vec![1.0, 3.0, 2.0]),
            (vec![7.0], vec![1.0, 2.0, 3.0, 9.0]),
            (vec![1.0, 2.0, 3.0, 4.0], vec![2.5, 3.5, 4.5, 5.5]),
        ];
        for (x, y) in cases {
            let ours = mann_whitney_u(&x, &y).unwrap().p_raw;
            let brute = brute_force_mwu_p(&x, &y);
            assert!(
                (ours - brute).abs() < 1e-12,
                "x={x:?} y={y:?}: {ours} vs {brute}"
            );
        }
    }

    #[test]
    fn ztest_equal_proportions() {
        let r = proportions_ztest(30, 100, 30, 100).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_raw, 1.0);
        assert_eq!(r.effect_value, 0.0);
        assert_eq!(r.category, EffectCategory::S);
    }

    #[test]
    fn ztest_h_endpoints() {
        let r = proportions_ztest(100, 100, 0, 100).unwrap();
        assert_eq!(r.effect_value.abs(), std::f64::consts::PI);
    }

    #[test]
    fn ztest_matches_simulation() {
        // Exact-binomial Monte-Carlo reference under the pooled null.
        let r = proportions_ztest(50, 100, 30, 100).unwrap();
        let pooled = 0.4f64;
        let observed_gap = (0.5f64 - 0.3).abs();
        let mut state = 0x9E37_79B9u64;
        let mut uniform = || {
            state = crate::seeding::splitmix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let draws = 1_000_000;
        let mut extreme = 0u64;
        for _ in 0..draws {
            let mut k1 = 0u32;
            let mut k2 = 0u32;
            for _ in 0..100 {
                if uniform() < pooled {
                    k1 += 1;
                }
                if uniform() < pooled {
                    k2 += 1;
                }
            }
            if (f64::from(k1) / 100.0 - f64::from(k2) / 100.0).abs() >= observed_gap - 1e-12 {
                extreme += 1;
            }
        }
        let simulated = extreme as f64 / draws as f64;
        assert!(
            (r.p_raw - simulated).abs() < 0.005,
            "analytic {} vs simulated {simulated}",
            r.p_raw
        );
    }

    #[test]
    fn mcnemar_symmetric_is_one() {
        let r = mcnemar_exact(6, 6).unwrap();
        assert_eq!(r.p_raw, 1.0);
        assert_eq!(r.effect_value, 0.0);
    }

    #[test]
    fn mcnemar_hand_tail() {
        // b=5, c=0: two-sided p = 2 * (1/2)^5.
        let r = mcnemar_exact(5, 0).unwrap();
        assert!((r.p_raw - 0.0625).abs() < 1e-15);
        assert_eq!(r.effect_value, 0.5);
        assert_eq!(r.doubled_g, Some(1.0));
        assert_eq!(r.category, EffectCategory::L);
    }

    #[test]
    fn mcnemar_empty_rejected() {
        assert_eq!(
            mcnemar_exact(0, 0).unwrap_err(),
            StatsError::ZeroObservations
        );
    }

    #[test]
    fn mcnemar_matches_binomial_enumeration() {
        // Brute force over the binomial mass for all b + c <= 8.
        for b in 0..=8u64 {
            for c in 0..=(8 - b) {
                if b + c == 0 {
                    continue;
                }
                let n = b + c;
                let k = b.min(c);
                let mut tail = 0.0;
                for i in 0..=k {
                    let mut coeff = 1.0f64;
                    for j in 1..=i {
                        coeff = coeff * (n - j + 1) as f64 / j as f64;
                    }
                    tail += coeff * 0.5f64.powi(n as i32);
                }
                let expected = (2.0 * tail).min(1.0);
                let ours = mcnemar_exact(b, c).unwrap().p_raw;
                assert!((ours - expected).abs() < 1e-12, "b={b} c={c}");
            }
        }
    }

    #[test]
    fn wilcoxon_all_positive() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 0.5]).unwrap();
        assert_eq!(r.effect_value, 1.0);
    }

    #[test]
    fn wilcoxon_balanced_pair() {
        let r = wilcoxon_signed_rank(&[1.0, -1.0]).unwrap();
        assert_eq!(r.effect_value, 0.0);
        assert_eq!(r.p_raw, 1.0);
    }

    #[test]
    fn wilcoxon_rejects_all_zero() {
        assert_eq!(
            wilcoxon_signed_rank(&[0.0, 0.0]).unwrap_err(),
            StatsError::AllZeroDifferences
        );
    }

    /// Oracle: enumerate all sign patterns of the |diff| ranks.
    fn brute_force_wilcoxon_p(diffs: &[f64]) -> f64 {
        let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
        let n = nonzero.len();
        let mut abs_sorted: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
        abs_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rank_of = |v: f64| -> f64 {
            let lo = abs_sorted.iter().filter(|&&s| s < v).count();
            let eq = abs_sorted.iter().filter(|&&s| s == v).count();
            (2 * lo + eq + 1) as f64 / 2.0
        };
        let obs: f64 = nonzero
            .iter()
            .filter(|&&d| d > 0.0)
            .map(|&d| rank_of(d.abs()))
            .sum();
        let ranks: Vec<f64> = nonzero.iter().map(|&d| rank_of(d.abs())).collect();
        let mut le = 0u64;
        let mut ge = 0u64;
        for mask in 0u32..(1 << n) {
            let w: f64 = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| ranks[i])
                .sum();
            if w <= obs + 1e-9 {
                le += 1;
            }
            if w >= obs - 1e-9 {
                ge += 1;
            }
        }
        (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0)
    }

    #[test]
    fn wilcoxon_exact_matches_enumeration() {
        let cases: Vec<Vec<f64>> = vec![
            vec![1.0, 2.0, 3.0, -1.0],
            vec![0.5, -0.25, 2.0, -2.0, 1.5],
            vec![1.0, 1.0, -1.0, 2.0],
            vec![3.0, -4.0],
        ];
        for diffs in cases {
            let ours = wilcoxon_signed_rank(&diffs).unwrap().p_raw;
            let brute = brute_force_wilcoxon_p(&diffs);
            assert!((ours - brute).abs() < 1e-12, "{diffs:?}: {ours} vs {brute}");
        }
    }

    #[test]
    fn holm_hand_case() {
        let adjusted = holm_adjust(&[0.01, 0.04, 0.03]).unwrap();
        assert!((adjusted[0] - 0.03).abs() < 1e-12);
        assert!((adjusted[1] - 0.06).abs() < 1e-12);
        assert!((adjusted[2] - 0.06).abs() < 1e-12);
    }

    #[test]
    fn holm_single_and_capped() {
        assert_eq!(holm_adjust(&[0.2]).unwrap(), vec![0.2]);
        assert_eq!(holm_adjust(&[1.0, 1.0]).unwrap(), vec![1.0, 1.0]);
        assert!(matches!(
            holm_adjust(&[0.5, 1.5]).unwrap_err(),
            StatsError::OutOfRangeP(_)
        ));
    }

    #[test]
    fn holm_never_decreases_and_is_deterministic() {
        let raw = vec![0.001, 0.9, 0.04, 0.2, 0.04];
        let once = holm_adjust(&raw).unwrap();
        for (r, a) in raw.iter().zip(&once) {
            assert!(a >= r);
        }
        // Same input, same output; adjusted values keep the raw ordering.
        assert_eq!(once, holm_adjust(&raw).unwrap());
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&a, &b| raw[a].partial_cmp(&raw[b]).unwrap());
        for pair in order.windows(2) {
            assert!(once[pair[0]] <= once[pair[1]]);
        }
    }

    #[test]
    fn category_thresholds() {
        assert_eq!(
            effect_size_category(1.0, EffectKind::CliffsDelta),
            EffectCategory::L
        );
        assert_eq!(
            effect_size_category(0.0, EffectKind::CohensH),
            EffectCategory::S
        );
        assert_eq!(
            effect_size_category(0.20, EffectKind::CohensG),
            EffectCategory::M
        );
        assert_eq!(
            effect_size_category(-0.35, EffectKind::RankBiserial),
            EffectCategory::M
        );
    }

    #[test]
    fn significance_follows_adjustment() {
        let mut results = vec![
            mann_whitney_u(&[1.0, 2.0, 3.0], &[10.0, 11.0, 12.0]).unwrap(),
            mann_whitney_u(&[1.0, 2.0, 3.0], &[1.5, 2.5, 3.5]).unwrap(),
        ];
        holm_adjust_results(&mut results).unwrap();
        for r in &results {
            assert!(r.p_adjusted >= r.p_raw);
            assert_eq!(r.significant, r.p_adjusted < 0.05);
        }
    }
}

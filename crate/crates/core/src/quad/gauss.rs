//! Gauss-Laguerre evaluation of the nested BLER integral, with and without
//! the multiset cache.
//!
//! Each fold is `int_0^inf e^{-x} [e^x f_{C_m}(x)] g(x) dx`, so node `xi_i`
//! carries the factor `w_i e^{xi_i} f_{C_m}(xi_i)`. After `m` folds the
//! abscissa is a sum of `m` nodes; it depends only on the multiset of node
//! indices, which is what the DP caches on.

use super::complexity::binomial;
use super::{EvalCounter, GlRule, QuadOutcome};
use crate::error::{Error, Result};
use crate::model::{gaussian_tail, SystemConfig};

/// Default cap on Q-function evaluations.
pub const DEFAULT_BUDGET: u128 = 100_000_000;

/// `w e^xi f(xi)` for each node, per round, evaluated in the log domain.
fn node_factors(cfg: &SystemConfig, rule: &GlRule) -> Vec<Vec<f64>> {
    let ln2 = std::f64::consts::LN_2;
    (1..=cfg.max_rounds)
        .map(|m| {
            let scale = cfg.gain_mean * cfg.snr_of(m);
            rule.nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&x, &w)| w * (x + ln2.ln() - scale.ln() + x * ln2 - (x * ln2).exp_m1() / scale).exp())
                .collect()
        })
        .collect()
}

fn q_at(cfg: &SystemConfig, m: usize, s: f64) -> f64 {
    gaussian_tail((s - cfg.rate) / ((m as f64).sqrt() * cfg.dispersion_scale()))
}

pub fn bler_gl_naive(cfg: &SystemConfig, rule: &GlRule) -> Result<QuadOutcome> {
    bler_gl_naive_with_budget(cfg, rule, DEFAULT_BUDGET)
}

/// Full `M`-fold tensor sum: every index tuple evaluates all `M` Q factors.
pub fn bler_gl_naive_with_budget(cfg: &SystemConfig, rule: &GlRule, budget: u128) -> Result<QuadOutcome> {
    cfg.validate()?;
    let big_m = cfg.max_rounds;
    let n = rule.order;
    let needed = (n as u128)
        .checked_pow(big_m as u32)
        .and_then(|p| p.checked_mul(big_m as u128))
        .unwrap_or(u128::MAX);
    if needed > budget {
        return Err(Error::Budget { what: "naive Gauss-Laguerre Q evaluations", needed, limit: budget });
    }
    let factors = node_factors(cfg, rule);
    let mut idx = vec![0usize; big_m];
    let mut total = 0.0;
    let mut q_evals = 0u64;
    loop {
        let mut s = 0.0;
        let mut term = 1.0;
        for (m, &i) in idx.iter().enumerate() {
            s += rule.nodes[i];
            term *= factors[m][i] * q_at(cfg, m + 1, s);
        }
        q_evals += big_m as u64;
        total += term;

        // odometer, last index fastest
        let mut pos = big_m;
        loop {
            if pos == 0 {
                let counter = EvalCounter {
                    q_evals,
                    psi_evals: 0,
                    cache_entries: 0,
                    layer_sizes: (1..=big_m as u32).map(|m| (n as u64).pow(m)).collect(),
                };
                return Ok(QuadOutcome { value: total, counter });
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < n {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Rank of a sorted multiset in the combinatorial number system.
fn rank(sorted: &[usize]) -> usize {
    sorted.iter().enumerate().map(|(k, &a)| binomial((a + k) as u64, (k + 1) as u64).unwrap() as usize).sum()
}

/// All size-`m` multisets of `0..n`, as sorted vectors in rank order.
fn multisets(m: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; m];
    loop {
        out.push(cur.clone());
        // next in colex order: bump the lowest position that can grow
        let mut k = 0;
        while k < m {
            let cap = if k + 1 < m { cur[k + 1] } else { n - 1 };
            if cur[k] < cap {
                cur[k] += 1;
                for j in 0..k {
                    cur[j] = 0;
                }
                break;
            }
            k += 1;
        }
        if k == m {
            return out;
        }
    }
}

pub fn bler_gl_dp(cfg: &SystemConfig, rule: &GlRule) -> Result<QuadOutcome> {
    bler_gl_dp_with_budget(cfg, rule, DEFAULT_BUDGET)
}

/// Layered evaluation with `Q_m phi_m` cached per node multiset of size `m`.
pub fn bler_gl_dp_with_budget(cfg: &SystemConfig, rule: &GlRule, budget: u128) -> Result<QuadOutcome> {
    cfg.validate()?;
    let big_m = cfg.max_rounds;
    let n = rule.order;
    let needed = binomial((big_m + n) as u64, n as u64).map_or(u128::MAX, |b| b - 1);
    if needed > budget {
        return Err(Error::Budget { what: "DP Gauss-Laguerre Q evaluations", needed, limit: budget });
    }
    let factors = node_factors(cfg, rule);
    let mut counter = EvalCounter::default();

    // g[r] = Q_m(S) phi_m(S) for the multiset of rank r at the current layer
    let mut g: Vec<f64> = Vec::new();
    for m in (1..=big_m).rev() {
        let sets = multisets(m, n);
        let next_factors = factors.get(m);
        let layer: Vec<f64> = sets
            .iter()
            .map(|set| {
                let s: f64 = set.iter().map(|&i| rule.nodes[i]).sum();
                let phi = match next_factors {
                    None => 1.0,
                    Some(fac) => {
                        let mut ext = Vec::with_capacity(m + 1);
                        (0..n)
                            .map(|i| {
                                ext.clear();
                                let at = set.partition_point(|&a| a <= i);
                                ext.extend_from_slice(&set[..at]);
                                ext.push(i);
                                ext.extend_from_slice(&set[at..]);
                                fac[i] * g[rank(&ext)]
                            })
                            .sum()
                    }
                };
                q_at(cfg, m, s) * phi
            })
            .collect();
        counter.q_evals += layer.len() as u64;
        counter.cache_entries += layer.len() as u64;
        counter.layer_sizes.push(layer.len() as u64);
        g = layer;
    }
    counter.layer_sizes.reverse();
    let value = factors[0].iter().zip(&g).map(|(f, gv)| f * gv).sum();
    counter.cache_entries += 1;
    Ok(QuadOutcome { value, counter })
}

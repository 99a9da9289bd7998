//! High-SNR closed form of the average BLER.
//!
//! At high SNR the capacity density is `ln2 / (lambda snr) * 2^x` and, with
//! the Gaussian tail replaced by its piecewise-linear interpolant, the nested
//! integral becomes `(ln2)^M psi_0(0) / (lambda^M prod snr_m)` where
//! `psi_M(x) = 2^x` and
//!
//! ```text
//! psi_m(x) = k_m - F_{m+1}(x),   F_{m+1}(x) = int_0^x psi_{m+1},
//! k_m = 1/(2 V_{m+1}) int_{R - V_{m+1}}^{R + V_{m+1}} F_{m+1}.
//! ```
//!
//! Every `psi_m` stays of the form `sum_i alpha_{m,i} x^i + c_m 2^x` with
//! `c_m = (-ln2)^{m-M}`, so the table below is built by applying that map to
//! the coefficients directly. [`coeff_oracle`] evaluates the same recursion by
//! numerical integration instead.

use std::cell::RefCell;
use std::f64::consts::{LN_2, LOG2_E, PI};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrate::{adaptive, adaptive_with_breaks};
use crate::mc::{BlerCurve, BlerMethod};
use crate::model::SystemConfig;

/// Half-width of the linear segment of the round-`m` tail:
/// `sqrt(m pi / (2 L)) log2(e)`.
pub fn linear_half_width(m: usize, blocklength: f64) -> f64 {
    (m as f64 * PI / (2.0 * blocklength)).sqrt() * LOG2_E
}

fn ramp(t: f64, rate: f64, half: f64) -> f64 {
    if t <= rate - half {
        1.0
    } else if t >= rate + half {
        0.0
    } else {
        0.5 - (t - rate) / (2.0 * half)
    }
}

/// Piecewise-linear stand-in for the round-`m` tail: 1 below `R - V_m`,
/// 0 above `R + V_m`, with matching slope at `R`.
pub fn linearized_q(t: f64, m: usize, cfg: &SystemConfig) -> Result<f64> {
    if m == 0 || m > cfg.max_rounds {
        return Err(Error::Domain(format!("round index {m} outside [1, {}]", cfg.max_rounds)));
    }
    Ok(ramp(t, cfg.rate, linear_half_width(m, cfg.blocklength)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticCoeffs {
    pub max_rounds: usize,
    pub rate: f64,
    pub gain_mean: f64,
    /// `alpha[m][i]` for `0 <= m <= M`, `0 <= i <= M - m`.
    pub alpha: Vec<Vec<f64>>,
    /// `c_m = (-ln2)^{m-M}` for `0 <= m <= M`.
    pub exp_coeff: Vec<f64>,
    /// `V_1 .. V_M`.
    pub v: Vec<f64>,
    /// `G_1 .. G_M`, each for the problem truncated to that many rounds.
    pub g: Vec<f64>,
}

impl AsymptoticCoeffs {
    pub fn psi(&self, m: usize, s: f64) -> f64 {
        let poly = self.alpha[m].iter().rev().fold(0.0, |acc, a| acc * s + a);
        poly + self.exp_coeff[m] * s.exp2()
    }

    /// Diversity-normalised BLER constant for `M` rounds.
    pub fn g_max(&self) -> f64 {
        self.g[self.max_rounds - 1]
    }

    /// `G_m / prod_{i<=m} snr_i`, unclamped.
    pub fn bler_at(&self, m: usize, snr: &[f64]) -> f64 {
        self.g[m - 1] / snr[..m].iter().product::<f64>()
    }
}

/// Which constant-term rule to apply.
#[derive(Clone, Copy, PartialEq)]
enum ConstantRule {
    /// Integrates `F_{m+1}` over the linear segment.
    Recursion,
    /// Integrates the polynomial part of `psi_{m+1}` and scales the
    /// exponential part by `1/ln2` instead of `1/ln2^2`. Disagrees with direct
    /// integration; kept only for comparison.
    Variant,
}

/// `(alpha, c)` tables for `M` rounds.
fn table(big_m: usize, rate: f64, blocklength: f64, rule: ConstantRule) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut alpha = vec![Vec::new(); big_m + 1];
    let mut c = vec![0.0; big_m + 1];
    alpha[big_m] = vec![0.0];
    c[big_m] = 1.0;
    for m in (0..big_m).rev() {
        let v = linear_half_width(m + 1, blocklength);
        let (hi, lo) = (rate + v, rate - v);
        let next = &alpha[m + 1];
        let cn = c[m + 1];
        let mut row = vec![0.0; big_m - m + 1];
        for i in 1..row.len() {
            row[i] = -next[i - 1] / i as f64;
        }
        row[0] = match rule {
            ConstantRule::Recursion => {
                let poly: f64 = next
                    .iter()
                    .enumerate()
                    .map(|(i, a)| {
                        let p = i as i32 + 2;
                        a * (hi.powi(p) - lo.powi(p)) / ((i + 1) * (i + 2)) as f64
                    })
                    .sum();
                (cn * (hi.exp2() - lo.exp2()) / (LN_2 * LN_2) + poly) / (2.0 * v)
            }
            ConstantRule::Variant => {
                let poly: f64 = next
                    .iter()
                    .enumerate()
                    .map(|(i, a)| {
                        let p = i as i32 + 1;
                        a * (hi.powi(p) - lo.powi(p)) / (i + 1) as f64
                    })
                    .sum();
                (cn * (hi.exp2() - lo.exp2()) / LN_2 + poly) / (2.0 * v)
            }
        };
        alpha[m] = row;
        c[m] = -cn / LN_2;
    }
    (alpha, c)
}

fn g_from_psi0(psi0: f64, m: usize, gain_mean: f64) -> f64 {
    LN_2.powi(m as i32) * psi0 / gain_mean.powi(m as i32)
}

fn build(cfg: &SystemConfig, rule: ConstantRule) -> Result<AsymptoticCoeffs> {
    cfg.validate_link()?;
    let big_m = cfg.max_rounds;
    let (alpha, exp_coeff) = table(big_m, cfg.rate, cfg.blocklength, rule);
    let g = (1..=big_m)
        .map(|m| {
            let (a, c) = table(m, cfg.rate, cfg.blocklength, rule);
            g_from_psi0(a[0][0] + c[0], m, cfg.gain_mean)
        })
        .collect();
    Ok(AsymptoticCoeffs {
        max_rounds: big_m,
        rate: cfg.rate,
        gain_mean: cfg.gain_mean,
        alpha,
        exp_coeff,
        v: (1..=big_m).map(|m| linear_half_width(m, cfg.blocklength)).collect(),
        g,
    })
}

pub fn asymptotic_coeffs(cfg: &SystemConfig) -> Result<AsymptoticCoeffs> {
    build(cfg, ConstantRule::Recursion)
}

/// Same table with the alternative constant-term rule described on
/// `ConstantRule::Variant`; useful only to quantify how far it drifts.
pub fn asymptotic_coeffs_variant(cfg: &SystemConfig) -> Result<AsymptoticCoeffs> {
    build(cfg, ConstantRule::Variant)
}

/// `G_m / prod snr` for every `m`, clamped to `[0, 1]`. Silent rounds give 1.
pub fn bler_asymptotic(cfg: &SystemConfig) -> Result<BlerCurve> {
    let coeffs = asymptotic_coeffs(cfg)?;
    let values = (1..=cfg.max_rounds).map(|m| coeffs.bler_at(m, &cfg.snr).clamp(0.0, 1.0)).collect();
    Ok(BlerCurve::deterministic(values, BlerMethod::Asymptotic, None))
}

pub const ORACLE_MAX_ROUNDS: usize = 5;

/// Numerically integrated counterpart of [`AsymptoticCoeffs`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    /// `psi_0(0)` from the `k_m - F_{m+1}` recursion.
    pub psi0: f64,
    /// `psi_0(0)` from the plain nested integral
    /// `psi_m(s) = int_s^inf Qlin_{m+1}(t) psi_{m+1}(t) dt`. The two differ
    /// once `M >= 2` because the closed recursion assumes `s <= R - V_{m+1}`.
    pub psi0_direct: f64,
    /// `(m, s, psi_m(s))` for `s` in `{0, 1, R}`.
    pub samples: Vec<(usize, f64, f64)>,
    /// `G_1 .. G_M` from the recursion.
    pub g: Vec<f64>,
}

const ORACLE_TOL: f64 = 1e-13;

struct Recursion {
    big_m: usize,
    rate: f64,
    v: Vec<f64>,
    k: RefCell<Vec<Option<f64>>>,
}

impl Recursion {
    fn new(big_m: usize, rate: f64, blocklength: f64) -> Self {
        Recursion {
            big_m,
            rate,
            v: (1..=big_m).map(|m| linear_half_width(m, blocklength)).collect(),
            k: RefCell::new(vec![None; big_m]),
        }
    }

    fn psi(&self, m: usize, x: f64) -> f64 {
        if m == self.big_m {
            x.exp2()
        } else {
            self.k_const(m) - self.antiderivative(m + 1, x)
        }
    }

    fn antiderivative(&self, m: usize, x: f64) -> f64 {
        adaptive(|t| self.psi(m, t), 0.0, x, ORACLE_TOL)
    }

    fn k_const(&self, m: usize) -> f64 {
        if let Some(k) = self.k.borrow()[m] {
            return k;
        }
        let v = self.v[m];
        let k = adaptive(|t| self.antiderivative(m + 1, t), self.rate - v, self.rate + v, ORACLE_TOL) / (2.0 * v);
        self.k.borrow_mut()[m] = Some(k);
        k
    }

    fn psi_direct(&self, m: usize, s: f64) -> f64 {
        if m == self.big_m {
            return s.exp2();
        }
        let v = self.v[m];
        let (lo, hi) = (self.rate - v, self.rate + v);
        if s >= hi {
            return 0.0;
        }
        let mut pts = vec![s];
        pts.extend([lo, hi].into_iter().filter(|&p| p > s));
        adaptive_with_breaks(|t| ramp(t, self.rate, v) * self.psi_direct(m + 1, t), &pts, ORACLE_TOL)
    }
}

/// Evaluates the high-SNR recursion by nested adaptive quadrature, for up to
/// [`ORACLE_MAX_ROUNDS`] rounds.
pub fn coeff_oracle(cfg: &SystemConfig) -> Result<OracleReport> {
    cfg.validate()?;
    let big_m = cfg.max_rounds;
    if big_m > ORACLE_MAX_ROUNDS {
        return Err(Error::Config(format!("oracle supports at most {ORACLE_MAX_ROUNDS} rounds, got {big_m}")));
    }
    let full = Recursion::new(big_m, cfg.rate, cfg.blocklength);
    let psi0 = full.psi(0, 0.0);
    let mut samples = Vec::new();
    for m in 0..=big_m {
        for s in [0.0, 1.0, cfg.rate] {
            samples.push((m, s, full.psi(m, s)));
        }
    }
    let g = (1..=big_m)
        .map(|m| {
            let p = if m == big_m { psi0 } else { Recursion::new(m, cfg.rate, cfg.blocklength).psi(0, 0.0) };
            g_from_psi0(p, m, cfg.gain_mean)
        })
        .collect();
    Ok(OracleReport { psi0, psi0_direct: full.psi_direct(0, 0.0), samples, g })
}

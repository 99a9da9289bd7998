//! Layer-by-layer trapezoidal evaluation on a uniform capacity grid.
//!
//! Grid convention: layer `m` (`1 <= m <= M`) tabulates
//! `g_m(j) = Q_m(jH) phi_m(jH)` for `0 <= j < m(K+1)`. The trapezoid sum for
//! `phi_{m-1}(jH)` reads `g_m(j + k)` for `0 <= k <= K`, which never leaves
//! layer `m`'s grid, so layer `M` holds the `M(K+1)` initial values with
//! `phi_M = 1` and the tabulated `phi_m`, `1 <= m <= M-1`, number
//! `(M-1)M(K+1)/2`. Mass above `U = KH` is dropped in every layer.

use serde::{Deserialize, Serialize};

use super::{EvalCounter, QuadOutcome};
use crate::error::{Error, Result};
use crate::model::{capacity_density, gaussian_tail, SystemConfig};

/// Smallest upper limit `U` whose dropped capacity mass per layer is at most
/// `trunc_error`: `log2(1 - lambda snr_max ln(trunc_error))`.
pub fn truncation_bound(trunc_error: f64, gain_mean: f64, snr_max: f64) -> Result<f64> {
    if !(trunc_error > 0.0 && trunc_error < 1.0) {
        return Err(Error::Domain(format!("truncation error must lie in (0, 1), got {trunc_error}")));
    }
    Ok((1.0 - gain_mean * snr_max * trunc_error.ln()).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapezoidConfig {
    /// Target dropped mass, when `upper` was derived from it.
    pub trunc_error: Option<f64>,
    pub step: f64,
    pub intervals: usize,
    pub upper: f64,
}

impl TrapezoidConfig {
    /// `K` intervals over `[0, U]`.
    pub fn new(upper: f64, intervals: usize) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::Config("trapezoid needs at least one interval".into()));
        }
        if !(upper > 0.0 && upper.is_finite()) {
            return Err(Error::Config(format!("trapezoid upper limit must be positive, got {upper}")));
        }
        Ok(TrapezoidConfig { trunc_error: None, step: upper / intervals as f64, intervals, upper })
    }

    /// Step `H` with `K = ceil(U / H)`; the upper limit becomes `K H >= U`.
    pub fn with_step(upper: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Config(format!("trapezoid step must be positive, got {step}")));
        }
        let intervals = (upper / step).ceil() as usize;
        if intervals == 0 {
            return Err(Error::Config("trapezoid needs at least one interval".into()));
        }
        Ok(TrapezoidConfig { trunc_error: None, step, intervals, upper: intervals as f64 * step })
    }

    /// `K` intervals up to the truncation bound for `trunc_error` at the
    /// largest SNR of `cfg`.
    pub fn from_truncation(trunc_error: f64, intervals: usize, cfg: &SystemConfig) -> Result<Self> {
        let upper = truncation_bound(trunc_error, cfg.gain_mean, cfg.snr_max())?;
        let mut tc = Self::new(upper, intervals)?;
        tc.trunc_error = Some(trunc_error);
        Ok(tc)
    }

    fn validate(&self) -> Result<()> {
        if self.intervals == 0 || !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Config(format!(
                "invalid trapezoid grid: step {} with {} intervals",
                self.step, self.intervals
            )));
        }
        Ok(())
    }
}

/// Average BLER after `M` rounds by the truncated trapezoidal rule.
pub fn bler_trapezoid(cfg: &SystemConfig, tcfg: &TrapezoidConfig) -> Result<QuadOutcome> {
    cfg.validate()?;
    tcfg.validate()?;
    let big_m = cfg.max_rounds;
    let k = tcfg.intervals;
    let h = tcfg.step;
    let width = k + 1;
    let v = cfg.dispersion_scale();
    let mut counter = EvalCounter::default();

    let mut phi: Vec<f64> = Vec::new();
    for m in (1..=big_m).rev() {
        let n = m * width;
        let spread = (m as f64).sqrt() * v;
        let g: Vec<f64> = (0..n)
            .map(|j| {
                let q = gaussian_tail((j as f64 * h - cfg.rate) / spread);
                if m == big_m { q } else { q * phi[j] }
            })
            .collect();
        counter.q_evals += n as u64;
        counter.layer_sizes.push(n as u64);

        let scale = cfg.gain_mean * cfg.snr_of(m);
        let mut weights: Vec<f64> = (0..width).map(|i| h * capacity_density(i as f64 * h, scale)).collect();
        // right limit at the origin; the density itself is zero for x <= 0
        weights[0] = 0.5 * h * std::f64::consts::LN_2 / scale;
        weights[k] *= 0.5;

        let out_len = if m == 1 { 1 } else { (m - 1) * width };
        phi = (0..out_len)
            .map(|j| weights.iter().zip(&g[j..j + width]).map(|(w, gv)| w * gv).sum())
            .collect();
        counter.cache_entries += out_len as u64;
        if m > 1 {
            counter.psi_evals += out_len as u64;
        }
    }
    counter.layer_sizes.reverse();
    Ok(QuadOutcome { value: phi[0], counter })
}

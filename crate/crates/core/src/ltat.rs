//! Long-term average throughput, average power and average round count
//! from a BLER curve `P_1 .. P_M` (with `P_0 = 1`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::{BlerCurve, LtatReport};

/// Transmit power per round, in watts. Zero is allowed and means the round
/// is sent silently (it always fails).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPolicy {
    pub powers: Vec<f64>,
}

impl PowerPolicy {
    pub fn new(powers: Vec<f64>) -> Result<Self> {
        if powers.is_empty() {
            return Err(Error::Config("power policy needs at least one round".into()));
        }
        if let Some(p) = powers.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
            return Err(Error::Config(format!("powers must be finite and non-negative, got {p}")));
        }
        Ok(PowerPolicy { powers })
    }

    pub fn uniform(power: f64, rounds: usize) -> Result<Self> {
        Self::new(vec![power; rounds])
    }

    pub fn len(&self) -> usize {
        self.powers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.powers.is_empty()
    }

    pub(crate) fn check_len(&self, rounds: usize) -> Result<()> {
        if self.powers.len() != rounds {
            return Err(Error::Config(format!("policy has {} powers for {rounds} rounds", self.powers.len())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptConstraints {
    pub max_avg_power: f64,
    pub max_bler: f64,
}

impl OptConstraints {
    pub fn new(max_avg_power: f64, max_bler: f64) -> Result<Self> {
        let c = OptConstraints { max_avg_power, max_bler };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_avg_power > 0.0 && self.max_avg_power.is_finite()) {
            return Err(Error::Config(format!("average power limit must be positive, got {}", self.max_avg_power)));
        }
        if !(self.max_bler > 0.0 && self.max_bler < 1.0) {
            return Err(Error::Config(format!("BLER limit must lie in (0, 1), got {}", self.max_bler)));
        }
        Ok(())
    }
}

fn check_blers(blers: &[f64]) -> Result<()> {
    if blers.is_empty() {
        return Err(Error::Domain("BLER curve is empty".into()));
    }
    if let Some(p) = blers.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(format!("BLER values must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// `R (1 - P_M) / (1 + sum_{m<M} P_m)`.
pub fn ltat_from_blers(rate: f64, blers: &[f64]) -> Result<f64> {
    check_blers(blers)?;
    Ok(rate * (1.0 - blers[blers.len() - 1]) / avg_rounds(blers))
}

/// `sum_m P_m(power) * P_{m-1}`.
pub fn avg_power(policy: &PowerPolicy, blers: &[f64]) -> Result<f64> {
    check_blers(blers)?;
    policy.check_len(blers.len())?;
    Ok(policy.powers.iter().zip(std::iter::once(&1.0).chain(blers)).map(|(p, b)| p * b).sum())
}

/// `1 + sum_{m<M} P_m`.
pub fn avg_rounds(blers: &[f64]) -> f64 {
    1.0 + blers[..blers.len().saturating_sub(1)].iter().sum::<f64>()
}

/// Delta-method standard error of [`ltat_from_blers`] from the curve's
/// covariance; zero for deterministic curves.
pub fn ltat_std_error(rate: f64, curve: &BlerCurve) -> Result<f64> {
    let eta = ltat_from_blers(rate, &curve.values)?;
    let Some(cov) = &curve.covariance else {
        return Ok(0.0);
    };
    let big_m = curve.values.len();
    let d = avg_rounds(&curve.values);
    let grad: Vec<f64> = (0..big_m).map(|m| if m + 1 == big_m { -rate / d } else { -eta / d }).collect();
    let var: f64 = (0..big_m).flat_map(|i| (0..big_m).map(move |j| (i, j))).map(|(i, j)| grad[i] * cov[i][j] * grad[j]).sum();
    Ok(var.max(0.0).sqrt())
}

/// Throughput bookkeeping for one policy and its BLER curve.
pub fn report_from_curve(rate: f64, policy: &PowerPolicy, curve: &BlerCurve) -> Result<LtatReport> {
    Ok(LtatReport {
        ltat: ltat_from_blers(rate, &curve.values)?,
        avg_power: avg_power(policy, &curve.values)?,
        avg_rounds: avg_rounds(&curve.values),
        bler_final: curve.final_value(),
        slot_count: None,
        messages: None,
        delivered: None,
        std_errors: None,
    })
}

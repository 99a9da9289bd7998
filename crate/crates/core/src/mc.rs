//! Monte Carlo estimates of the average BLER curve and of long-run HARQ
//! throughput.
//!
//! Draws are split into fixed-size chunks, chunk `c` using substream `c` of
//! the master seed. Chunks run in parallel and their statistics are merged in
//! chunk order, so results do not depend on the number of worker threads.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ltat::PowerPolicy;
use crate::model::{approx_bler, fbl_error_probability, sample_gain, substream, SystemConfig};

pub const CHUNK: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlerMethod {
    McExact,
    McApprox,
    Trap,
    Gl,
    GlDp,
    #[serde(rename = "asy")]
    Asymptotic,
}

impl BlerMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            BlerMethod::McExact => "mc-exact",
            BlerMethod::McApprox => "mc-approx",
            BlerMethod::Trap => "trap",
            BlerMethod::Gl => "gl",
            BlerMethod::GlDp => "gl-dp",
            BlerMethod::Asymptotic => "asy",
        }
    }
}

/// Which per-round failure probability goes inside the expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorModel {
    /// Full dispersion `sum (1 - (1 + snr g)^-2)`.
    Exact,
    /// High-SNR dispersion `m / L`.
    Approx,
}

/// `P_1 .. P_M` with optional sampling uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlerCurve {
    pub values: Vec<f64>,
    pub std_errors: Option<Vec<f64>>,
    /// Covariance of the estimates (not of single draws), row-major `M x M`.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub method: BlerMethod,
    pub samples: Option<u64>,
    /// Q-function evaluations, for deterministic evaluators.
    pub q_evals: Option<u64>,
}

impl BlerCurve {
    pub fn deterministic(values: Vec<f64>, method: BlerMethod, q_evals: Option<u64>) -> Self {
        BlerCurve { values, std_errors: None, covariance: None, method, samples: None, q_evals }
    }

    pub fn final_value(&self) -> f64 {
        *self.values.last().expect("curve has at least one round")
    }
}

/// Running mean and co-moment matrix of a vector sample.
#[derive(Debug, Clone)]
struct Moments {
    n: u64,
    mean: Vec<f64>,
    comoment: Vec<Vec<f64>>,
}

impl Moments {
    fn new(dim: usize) -> Self {
        Moments { n: 0, mean: vec![0.0; dim], comoment: vec![vec![0.0; dim]; dim] }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        let before: Vec<f64> = x.iter().zip(&self.mean).map(|(xi, mi)| xi - mi).collect();
        for (m, d) in self.mean.iter_mut().zip(&before) {
            *m += d / n;
        }
        for i in 0..x.len() {
            let after_i = x[i] - self.mean[i];
            for j in 0..x.len() {
                self.comoment[i][j] += after_i * before[j];
            }
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        for i in 0..delta.len() {
            for j in 0..delta.len() {
                self.comoment[i][j] += other.comoment[i][j] + delta[i] * delta[j] * na * nb / n;
            }
        }
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d * nb / n;
        }
        self.n += other.n;
    }

    /// Covariance of the sample mean.
    fn mean_covariance(&self) -> Vec<Vec<f64>> {
        let n = self.n as f64;
        let denom = if self.n > 1 { n * (n - 1.0) } else { f64::INFINITY };
        self.comoment.iter().map(|row| row.iter().map(|c| c / denom).collect()).collect()
    }
}

fn chunk_sizes(total: u64) -> Vec<u64> {
    let full = total / CHUNK;
    let mut sizes = vec![CHUNK; full as usize];
    if !total.is_multiple_of(CHUNK) {
        sizes.push(total % CHUNK);
    }
    sizes
}

/// Smooth estimator `E[prod_{i<=m} eps_i]` for every `m`.
pub fn estimate_bler(cfg: &SystemConfig, n_samples: u64, model: ErrorModel, seed: u64) -> Result<BlerCurve> {
    cfg.validate_link()?;
    if n_samples == 0 {
        return Err(Error::Config("need at least one sample".into()));
    }
    let big_m = cfg.max_rounds;
    let v = cfg.dispersion_scale();
    let parts: Vec<Moments> = chunk_sizes(n_samples)
        .into_par_iter()
        .enumerate()
        .map(|(c, size)| {
            let mut rng = substream(seed, c as u64);
            let mut acc = Moments::new(big_m);
            let mut received = vec![0.0; big_m];
            let mut prod = vec![0.0; big_m];
            for _ in 0..size {
                let mut p = 1.0;
                let mut capacity = 0.0;
                for m in 0..big_m {
                    received[m] = cfg.snr[m] * sample_gain(&mut rng, cfg.gain_mean);
                    let eps = match model {
                        ErrorModel::Exact => {
                            fbl_error_probability(received[..=m].iter().copied(), cfg.rate, cfg.blocklength)
                        }
                        ErrorModel::Approx => {
                            capacity += received[m].log2_1p();
                            approx_bler(capacity, m + 1, cfg.rate, v)
                        }
                    };
                    p *= eps;
                    prod[m] = p;
                }
                acc.push(&prod);
            }
            acc
        })
        .collect();
    let mut total = Moments::new(big_m);
    for part in &parts {
        total.merge(part);
    }
    let covariance = total.mean_covariance();
    let std_errors = (0..big_m).map(|m| covariance[m][m].max(0.0).sqrt()).collect();
    Ok(BlerCurve {
        values: total.mean.clone(),
        std_errors: Some(std_errors),
        covariance: Some(covariance),
        method: match model {
            ErrorModel::Exact => BlerMethod::McExact,
            ErrorModel::Approx => BlerMethod::McApprox,
        },
        samples: Some(n_samples),
        q_evals: None,
    })
}

trait Log2OnePlus {
    fn log2_1p(self) -> f64;
}

impl Log2OnePlus for f64 {
    fn log2_1p(self) -> f64 {
        self.ln_1p() * std::f64::consts::LOG2_E
    }
}

/// Standard errors attached to an [`LtatReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LtatErrors {
    pub ltat: f64,
    pub avg_power: f64,
    pub avg_rounds: f64,
    pub bler_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LtatReport {
    /// Delivered bits per symbol per slot.
    pub ltat: f64,
    /// Transmit energy per message.
    pub avg_power: f64,
    /// Rounds per message.
    pub avg_rounds: f64,
    /// Fraction of messages still undecoded after the last round.
    pub bler_final: f64,
    pub slot_count: Option<u64>,
    pub messages: Option<u64>,
    pub delivered: Option<u64>,
    pub std_errors: Option<LtatErrors>,
}

/// Per-message totals collected while simulating or stepping an environment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CycleStats {
    n: u64,
    delivered: u64,
    sum_len: f64,
    sum_len2: f64,
    sum_energy: f64,
    sum_energy2: f64,
    sum_len_delivered: f64,
}

impl CycleStats {
    pub fn record(&mut self, rounds: usize, energy: f64, delivered: bool) {
        let len = rounds as f64;
        self.n += 1;
        self.sum_len += len;
        self.sum_len2 += len * len;
        self.sum_energy += energy;
        self.sum_energy2 += energy * energy;
        if delivered {
            self.delivered += 1;
            self.sum_len_delivered += len;
        }
    }

    pub fn messages(&self) -> u64 {
        self.n
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    /// Ratio-estimator standard error of `rate * delivered / rounds`.
    pub fn ltat_std_error(&self, rate: f64) -> f64 {
        if self.n < 2 || self.sum_len == 0.0 {
            return f64::NAN;
        }
        let n = self.n as f64;
        let d = self.delivered as f64;
        let r = d / self.sum_len;
        // residuals e = d_i - r l_i with sum e = 0
        let sum_e2 = d - 2.0 * r * self.sum_len_delivered + r * r * self.sum_len2;
        let mean_len = self.sum_len / n;
        rate * (sum_e2 / (n - 1.0)).max(0.0).sqrt() / (mean_len * n.sqrt())
    }

    fn report(&self, rate: f64, slots: u64) -> LtatReport {
        let n = self.n as f64;
        let sd = |s: f64, s2: f64| ((s2 - s * s / n) / (n - 1.0)).max(0.0).sqrt() / n.sqrt();
        let failures = self.n - self.delivered;
        let bler = failures as f64 / n;
        let ltat = rate * self.delivered as f64 / slots as f64;
        LtatReport {
            ltat,
            avg_power: self.sum_energy / n,
            avg_rounds: self.sum_len / n,
            bler_final: bler,
            slot_count: Some(slots),
            messages: Some(self.n),
            delivered: Some(self.delivered),
            std_errors: (self.n > 1).then(|| LtatErrors {
                ltat: self.ltat_std_error(rate),
                avg_power: sd(self.sum_energy, self.sum_energy2),
                avg_rounds: sd(self.sum_len, self.sum_len2),
                bler_final: (bler * (1.0 - bler) / n).sqrt(),
            }),
        }
    }
}

/// Plays HARQ cycles slot by slot for `n_slots` slots with Bernoulli decoding
/// outcomes drawn from the exact per-round failure probability.
///
/// `ltat` counts every slot, so `ltat * n_slots = R * delivered` holds exactly;
/// the per-message averages use completed cycles only.
pub fn simulate_episodes(cfg: &SystemConfig, policy: &PowerPolicy, n_slots: u64, seed: u64) -> Result<LtatReport> {
    cfg.validate_link()?;
    policy.check_len(cfg.max_rounds)?;
    if n_slots < cfg.max_rounds as u64 {
        return Err(Error::Config(format!("need at least {} slots, got {n_slots}", cfg.max_rounds)));
    }
    let big_m = cfg.max_rounds;
    let snr: Vec<f64> = policy.powers.iter().map(|p| p / cfg.noise_power).collect();
    let mut rng = substream(seed, 0);
    let mut stats = CycleStats::default();
    let mut received = Vec::with_capacity(big_m);
    let mut energy = 0.0;
    let mut slot = 0u64;
    while slot < n_slots {
        let m = received.len();
        received.push(snr[m] * sample_gain(&mut rng, cfg.gain_mean));
        energy += policy.powers[m];
        slot += 1;
        let eps = fbl_error_probability(received.iter().copied(), cfg.rate, cfg.blocklength);
        let failed = rng.gen::<f64>() < eps;
        if !failed || received.len() == big_m {
            stats.record(received.len(), energy, !failed);
            received.clear();
            energy = 0.0;
        }
    }
    if stats.messages() == 0 {
        return Err(Error::Config("no HARQ cycle completed".into()));
    }
    Ok(stats.report(cfg.rate, n_slots))
}

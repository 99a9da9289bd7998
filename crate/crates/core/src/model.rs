//! Finite-blocklength error model and the Rayleigh block-fading channel.
//!
//! Every HARQ round `m` sends `L` fresh coded symbols at average transmit SNR
//! `snr_m`. With channel power gains `g_1..g_m` the receiver fails after round
//! `m` with the normal-approximation probability
//!
//! ```text
//! eps_m = Q( (sum_i log2(1 + snr_i g_i) - R) / (log2(e) sqrt(D_m / L)) ),
//! D_m   = sum_i (1 - (1 + snr_i g_i)^-2)
//! ```
//!
//! and the high-SNR variant replaces `D_m` with `m`.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gaussian tail probability `Q(x) = P(Z > x)` without input checks.
///
/// Non-finite inputs map to the limits (`Q(-inf) = 1`, `Q(inf) = 0`,
/// `Q(NaN) = NaN`). Use [`q_function`] at API boundaries.
#[inline]
pub fn gaussian_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Gaussian tail probability `Q(x)`.
pub fn q_function(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("Q-function argument must be finite, got {x}")));
    }
    Ok(gaussian_tail(x))
}

/// Link parameters shared by every evaluator.
///
/// `snr` holds the linear average transmit SNRs `P_m / N0`, one per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub max_rounds: usize,
    /// Symbols per HARQ round.
    pub blocklength: f64,
    /// Initial rate `R = K / L` in bits per symbol.
    pub rate: f64,
    /// Mean channel power gain.
    pub gain_mean: f64,
    pub noise_power: f64,
    /// Information bits per message, when the rate was derived from it.
    pub info_bits: Option<f64>,
    pub snr: Vec<f64>,
}

impl SystemConfig {
    /// Builds a configuration with every round at 0 dB; set the SNRs with
    /// [`SystemConfig::with_snr_db`] or [`SystemConfig::with_powers`].
    pub fn new(max_rounds: usize, blocklength: f64, rate: f64, gain_mean: f64) -> Result<Self> {
        let cfg = SystemConfig {
            max_rounds,
            blocklength,
            rate,
            gain_mean,
            noise_power: 1.0,
            info_bits: None,
            snr: vec![1.0; max_rounds],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fixes the number of information bits, deriving `R = K / L`.
    pub fn from_info_bits(max_rounds: usize, blocklength: f64, info_bits: f64, gain_mean: f64) -> Result<Self> {
        let mut cfg = Self::new(max_rounds, blocklength, info_bits / blocklength, gain_mean)?;
        cfg.info_bits = Some(info_bits);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_noise_power(mut self, noise_power: f64) -> Result<Self> {
        self.noise_power = noise_power;
        self.validate()?;
        Ok(self)
    }

    /// Sets the per-round SNRs in dB. A single value is broadcast to all rounds.
    pub fn with_snr_db(mut self, snr_db: &[f64]) -> Result<Self> {
        self.snr = broadcast(snr_db, self.max_rounds)?.into_iter().map(db_to_linear).collect();
        self.validate()?;
        Ok(self)
    }

    /// Sets the per-round SNRs from transmit powers, `snr_m = P_m / N0`.
    /// Zero power is accepted.
    pub fn with_powers(mut self, powers: &[f64]) -> Result<Self> {
        self.snr = broadcast(powers, self.max_rounds)?.into_iter().map(|p| p / self.noise_power).collect();
        self.validate_link()?;
        Ok(self)
    }

    /// Same link, first `m` rounds only.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.max_rounds {
            return Err(Error::Domain(format!("cannot truncate {} rounds to {m}", self.max_rounds)));
        }
        let mut cfg = self.clone();
        cfg.max_rounds = m;
        cfg.snr.truncate(m);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_link()?;
        if let Some(&s) = self.snr.iter().find(|s| **s <= 0.0) {
            return Err(Error::Config(format!("SNR values must be positive, got {s}")));
        }
        Ok(())
    }

    /// Like [`validate`](Self::validate) but admits silent rounds (SNR 0).
    pub fn validate_link(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.max_rounds == 0 {
            return bad("max_rounds must be at least 1".into());
        }
        if !(self.blocklength >= 1.0 && self.blocklength.is_finite()) {
            return bad(format!("blocklength must be >= 1, got {}", self.blocklength));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return bad(format!("rate must be positive, got {}", self.rate));
        }
        if !(self.gain_mean > 0.0 && self.gain_mean.is_finite()) {
            return bad(format!("gain_mean must be positive, got {}", self.gain_mean));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return bad(format!("noise_power must be positive, got {}", self.noise_power));
        }
        if self.snr.len() != self.max_rounds {
            return bad(format!("expected {} SNR values, got {}", self.max_rounds, self.snr.len()));
        }
        if let Some(&s) = self.snr.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return bad(format!("SNR values must be non-negative and finite, got {s}"));
        }
        if let Some(k) = self.info_bits {
            if ((k / self.blocklength) - self.rate).abs() > 1e-12 * self.rate {
                return bad(format!("rate {} inconsistent with {k} bits over {} symbols", self.rate, self.blocklength));
            }
        }
        Ok(())
    }

    /// `V = log2(e) / sqrt(L)`.
    pub fn dispersion_scale(&self) -> f64 {
        std::f64::consts::LOG2_E / self.blocklength.sqrt()
    }

    /// SNR of round `m` (1-based).
    pub fn snr_of(&self, m: usize) -> f64 {
        self.snr[m - 1]
    }

    pub fn snr_max(&self) -> f64 {
        self.snr.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn snr_db(&self) -> Vec<f64> {
        self.snr.iter().map(|&s| linear_to_db(s)).collect()
    }

    fn check_round(&self, m: usize) -> Result<()> {
        if m == 0 || m > self.max_rounds {
            return Err(Error::Domain(format!("round index {m} outside [1, {}]", self.max_rounds)));
        }
        Ok(())
    }
}

fn broadcast(values: &[f64], n: usize) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; n]),
        len if len == n => Ok(values.to_vec()),
        len => Err(Error::Config(format!("expected 1 or {n} per-round values, got {len}"))),
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Channel power gains `g_1..g_m` of one HARQ cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSample {
    gains: Vec<f64>,
}

impl GainSample {
    pub fn new(gains: Vec<f64>) -> Result<Self> {
        if let Some(&g) = gains.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::Domain(format!("channel gains must be positive, got {g}")));
        }
        Ok(GainSample { gains })
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }
}

/// Exact-dispersion failure probability for received SNRs `snr_i * g_i`.
///
/// Zero accumulated dispersion means nothing was received; that is a
/// certain failure for any positive rate.
pub fn fbl_error_probability(received_snr: impl IntoIterator<Item = f64>, rate: f64, blocklength: f64) -> f64 {
    let mut capacity = 0.0;
    let mut dispersion = 0.0;
    for x in received_snr {
        capacity += x.ln_1p() * std::f64::consts::LOG2_E;
        let y = 1.0 + x;
        dispersion += x * (2.0 + x) / (y * y);
    }
    if dispersion <= 0.0 {
        return 1.0;
    }
    let arg = (capacity - rate) / (std::f64::consts::LOG2_E * (dispersion / blocklength).sqrt());
    gaussian_tail(arg)
}

/// `eps_m` with the full dispersion term, `m = gains.len()`.
pub fn conditional_bler_exact(gains: &GainSample, cfg: &SystemConfig) -> Result<f64> {
    if gains.is_empty() {
        return Err(Error::Domain("at least one channel gain is required".into()));
    }
    if gains.len() > cfg.max_rounds {
        return Err(Error::Domain(format!("{} gains for {} rounds", gains.len(), cfg.max_rounds)));
    }
    let received = gains.gains().iter().zip(&cfg.snr).map(|(g, s)| g * s);
    Ok(fbl_error_probability(received, cfg.rate, cfg.blocklength))
}

/// High-SNR failure probability `Q((y - R) / (sqrt(m) V))` for accumulated
/// capacity `y` after `m` rounds.
pub fn conditional_bler_approx(capacity_sum: f64, m: usize, cfg: &SystemConfig) -> Result<f64> {
    cfg.check_round(m)?;
    Ok(approx_bler(capacity_sum, m, cfg.rate, cfg.dispersion_scale()))
}

#[inline]
pub(crate) fn approx_bler(capacity_sum: f64, m: usize, rate: f64, v: f64) -> f64 {
    gaussian_tail((capacity_sum - rate) / ((m as f64).sqrt() * v))
}

/// Density of the per-round capacity `C_m = log2(1 + snr_m g_m)`.
pub fn capacity_pdf(x: f64, m: usize, cfg: &SystemConfig) -> Result<f64> {
    cfg.check_round(m)?;
    Ok(capacity_density(x, cfg.gain_mean * cfg.snr_of(m)))
}

/// `f(x) = ln2 / s * 2^x * exp(-(2^x - 1) / s)` with `s = lambda * snr`.
#[inline]
pub(crate) fn capacity_density(x: f64, scale: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return 0.0;
    }
    let ln2 = std::f64::consts::LN_2;
    let growth = (x * ln2).exp_m1();
    (ln2.ln() - scale.ln() + x * ln2 - growth / scale).exp()
}

pub fn capacity_cdf(x: f64, m: usize, cfg: &SystemConfig) -> Result<f64> {
    cfg.check_round(m)?;
    Ok(1.0 - capacity_ccdf_scaled(x, cfg.gain_mean * cfg.snr_of(m)))
}

/// `1 - F_{C_m}(x)`, accurate in the upper tail.
pub fn capacity_ccdf(x: f64, m: usize, cfg: &SystemConfig) -> Result<f64> {
    cfg.check_round(m)?;
    Ok(capacity_ccdf_scaled(x, cfg.gain_mean * cfg.snr_of(m)))
}

fn capacity_ccdf_scaled(x: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    (-(x * std::f64::consts::LN_2).exp_m1() / scale).exp()
}

/// Inverse-CDF map from a uniform draw to an exponential gain with mean `lambda`.
#[inline]
pub fn gain_from_uniform(u: f64, lambda: f64) -> f64 {
    -lambda * (-u).ln_1p()
}

/// Draws one exponential channel power gain with mean `lambda`.
pub fn sample_gain<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> f64 {
    let u: f64 = rng.sample(Open01);
    gain_from_uniform(u, lambda)
}

/// Independent random stream `stream` derived from a master seed.
///
/// Streams with the same `(seed, stream)` pair replay identical draws.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn ref_link(m: usize) -> SystemConfig {
        SystemConfig::new(m, 50.0, 5.0, 1.0).unwrap()
    }

    #[test]
    fn q_function_reference_values() {
        assert_eq!(q_function(0.0).unwrap(), 0.5);
        // mpmath, 40 digits
        assert!((q_function(1.0).unwrap() - 0.158_655_253_931_457_05).abs() < 1e-15);
        assert!(q_function(40.0).unwrap() < 1e-300);
        assert!(q_function(f64::INFINITY).is_err());
        assert!(q_function(f64::NAN).is_err());
    }

    #[test]
    fn q_function_decreasing_in_tail() {
        let mut prev = 1.0;
        for i in 0..=400 {
            let q = q_function(i as f64 * 0.1).unwrap();
            assert!(q <= prev);
            prev = q;
        }
    }

    proptest! {
        #[test]
        fn q_function_symmetry(x in -40.0f64..40.0) {
            let s = q_function(x).unwrap() + q_function(-x).unwrap();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn exact_bler_decreasing_in_each_gain(
            gains in proptest::collection::vec(0.01f64..50.0, 1..4),
            idx in 0usize..3,
            bump in 1.01f64..3.0,
        ) {
            let cfg = ref_link(3).with_snr_db(&[10.0]).unwrap();
            let idx = idx % gains.len();
            let base = conditional_bler_exact(&GainSample::new(gains.clone()).unwrap(), &cfg).unwrap();
            let mut up = gains.clone();
            up[idx] *= bump;
            let bumped = conditional_bler_exact(&GainSample::new(up).unwrap(), &cfg).unwrap();
            prop_assert!(bumped <= base);
            prop_assert!((0.0..=1.0).contains(&base));
        }

        #[test]
        fn pdf_is_derivative_of_cdf(x in 0.1f64..10.0, snr_db in 0.0f64..30.0) {
            let cfg = ref_link(1).with_snr_db(&[snr_db]).unwrap();
            let pdf = capacity_pdf(x, 1, &cfg).unwrap();
            prop_assume!(pdf > 1e-200);
            let h = 1e-6 * x.max(1.0);
            let fd = (capacity_ccdf(x - h, 1, &cfg).unwrap() - capacity_ccdf(x + h, 1, &cfg).unwrap()) / (2.0 * h);
            let cdf_fd = (capacity_cdf(x + h, 1, &cfg).unwrap() - capacity_cdf(x - h, 1, &cfg).unwrap()) / (2.0 * h);
            prop_assert!((cdf_fd - fd).abs() <= 1e-9);
            // relative agreement only meaningful away from underflow of the CDF increment
            if pdf > 1e-8 {
                prop_assert!((fd - pdf).abs() <= 1e-6 * pdf, "fd {} pdf {}", fd, pdf);
            }
        }
    }

    #[test]
    fn exact_bler_capacity_equals_rate() {
        let cfg = ref_link(1).with_snr_db(&[0.0]).unwrap();
        let g = GainSample::new(vec![2f64.powf(5.0) - 1.0]).unwrap();
        assert!((conditional_bler_exact(&g, &cfg).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exact_bler_zero_received_snr_is_certain_failure() {
        assert_eq!(fbl_error_probability([0.0], 5.0, 50.0), 1.0);
        assert_eq!(fbl_error_probability([0.0, 0.0, 0.0], 5.0, 50.0), 1.0);
        // vanishing SNR approaches the same limit continuously
        assert!(fbl_error_probability([1e-12], 5.0, 50.0) > 1.0 - 1e-12);
    }

    #[test]
    fn exact_bler_large_snr_at_rate_is_half() {
        // two rounds at very high SNR whose capacities sum to R
        let cfg = SystemConfig::new(2, 50.0, 40.0, 1.0).unwrap();
        let x = 2f64.powf(20.0) - 1.0;
        let g = GainSample::new(vec![x, x]).unwrap();
        assert!((conditional_bler_exact(&g, &cfg).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn exact_bler_rejects_empty_and_long_samples() {
        let cfg = ref_link(2);
        assert!(conditional_bler_exact(&GainSample::new(vec![]).unwrap(), &cfg).is_err());
        let g = GainSample::new(vec![1.0; 3]).unwrap();
        assert!(conditional_bler_exact(&g, &cfg).is_err());
        assert!(GainSample::new(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn approx_bler_values() {
        let cfg = ref_link(3);
        for m in 1..=3 {
            assert_eq!(conditional_bler_approx(5.0, m, &cfg).unwrap(), 0.5);
        }
        assert!(conditional_bler_approx(1e3, 1, &cfg).unwrap() < 1e-300);
        assert!(conditional_bler_approx(0.0, 1, &cfg).unwrap() > 0.5);
        assert!(conditional_bler_approx(5.0, 0, &cfg).is_err());
        assert!(conditional_bler_approx(5.0, 4, &cfg).is_err());
        // V = log2(e)/sqrt(50); Q(1/V) = Q(4.901290717...) from mpmath
        let v = conditional_bler_approx(6.0, 1, &cfg).unwrap();
        assert_relative_eq!(v, 4.760_452_023_887_866_6e-7, max_relative = 1e-10);
    }

    #[test]
    fn exact_and_approx_agree_at_high_received_snr() {
        let cfg = ref_link(3).with_snr_db(&[20.0]).unwrap();
        for gains in [vec![1.0], vec![1.0, 2.5], vec![3.0, 1.2, 1.0], vec![0.3, 0.2]] {
            assert!(gains.iter().all(|g| g * 100.0 >= 20.0));
            let m = gains.len();
            let cap: f64 = gains.iter().map(|g: &f64| (1.0 + 100.0 * g).log2()).sum();
            let exact = conditional_bler_exact(&GainSample::new(gains.clone()).unwrap(), &cfg).unwrap();
            let approx = conditional_bler_approx(cap, m, &cfg).unwrap();
            if gains.iter().all(|g| g * 100.0 >= 100.0) {
                assert!((exact - approx).abs() <= 1e-3, "{gains:?}: {exact} vs {approx}");
            }
        }
    }

    #[test]
    fn capacity_pdf_support_and_origin() {
        let cfg = ref_link(1);
        assert_eq!(capacity_pdf(-1.0, 1, &cfg).unwrap(), 0.0);
        assert_relative_eq!(capacity_pdf(1e-12, 1, &cfg).unwrap(), std::f64::consts::LN_2, max_relative = 1e-9);
        assert_eq!(capacity_pdf(2000.0, 1, &cfg).unwrap(), 0.0);
        assert!(capacity_pdf(1.0, 2, &cfg).is_err());
    }

    #[test]
    fn capacity_pdf_integrates_to_one() {
        for snr_db in [0.0, 10.0, 20.0, 35.0] {
            let cfg = ref_link(1).with_snr_db(&[snr_db]).unwrap();
            let total = crate::integrate::adaptive(|x| capacity_pdf(x, 1, &cfg).unwrap(), 0.0, 40.0, 1e-13);
            assert!((total - 1.0).abs() < 1e-8, "{snr_db} dB: {total}");
        }
    }

    #[test]
    fn capacity_cdf_limits_and_truncation_point() {
        let cfg = ref_link(1).with_snr_db(&[20.0]).unwrap();
        assert_eq!(capacity_cdf(0.0, 1, &cfg).unwrap(), 0.0);
        assert_eq!(capacity_cdf(-3.0, 1, &cfg).unwrap(), 0.0);
        assert!((capacity_cdf(30.0, 1, &cfg).unwrap() - 1.0).abs() < 1e-300);
        let u = (1.0 + 100.0 * 1e5f64.ln()).log2();
        assert_relative_eq!(capacity_ccdf(u, 1, &cfg).unwrap(), 1e-5, max_relative = 1e-10);
    }

    #[test]
    fn gain_inverse_cdf() {
        assert_relative_eq!(gain_from_uniform(1.0 - (-1f64).exp(), 2.5), 2.5, max_relative = 1e-14);
        let tiny = gain_from_uniform(1e-300, 1.0);
        assert!(tiny > 0.0 && tiny < 1e-299);
    }

    #[test]
    fn sampled_gain_mean() {
        let lambda = 1.7;
        let n = 1_000_000;
        let mut rng = substream(99, 0);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let g = sample_gain(&mut rng, lambda);
            assert!(g > 0.0);
            s += g;
            s2 += g * g;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        assert!((mean - lambda).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map({
            let mut r = substream(7, 3);
            move |_| r.gen()
        }).collect();
        let b: Vec<u64> = (0..4).map({
            let mut r = substream(7, 3);
            move |_| r.gen()
        }).collect();
        let c: Vec<u64> = (0..4).map({
            let mut r = substream(7, 4);
            move |_| r.gen()
        }).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn config_validation() {
        assert!(SystemConfig::new(0, 50.0, 5.0, 1.0).is_err());
        assert!(SystemConfig::new(2, 50.0, -1.0, 1.0).is_err());
        assert!(SystemConfig::new(2, 50.0, 5.0, 0.0).is_err());
        assert!(ref_link(2).with_snr_db(&[1.0, 2.0, 3.0]).is_err());
        assert!(ref_link(2).with_powers(&[-1.0]).is_err());
        assert!(ref_link(2).with_powers(&[0.0]).is_ok());
        assert!(ref_link(2).with_powers(&[0.0]).unwrap().validate().is_err());
        let cfg = SystemConfig::from_info_bits(3, 200.0, 1000.0, 1.0).unwrap();
        assert_eq!(cfg.rate, 5.0);
        let cfg = ref_link(3).with_snr_db(&[10.0, 20.0, 30.0]).unwrap();
        assert_relative_eq!(cfg.snr_of(2), 100.0, max_relative = 1e-14);
        assert_eq!(cfg.truncated(2).unwrap().snr.len(), 2);
    }
}

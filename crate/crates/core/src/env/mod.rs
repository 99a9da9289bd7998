//! HARQ power-allocation environment with Lagrangian reward shaping.
//!
//! Each slot carries one round of the current message. The reward is
//!
//! ```text
//! rate + rho (Pbar - Mbar P) + nu (pmax - Mbar 1[final-round failure])
//! ```
//!
//! where `Mbar` is the rounds-per-message estimate from a sliding window of
//! the last `W` slots. Every `I` slots the duals move by projected
//! subgradient steps driven by the same window. The reward uses the duals and
//! `Mbar` in force when the slot starts; the transition reports them after the
//! slot's updates.

mod protocol;

pub use protocol::{serve, EnvFile};

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ltat::OptConstraints;
use crate::model::{fbl_error_probability, sample_gain, substream, SystemConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvHyper {
    pub window: usize,
    pub period: usize,
    pub rho0: f64,
    pub nu0: f64,
    pub step_rho: f64,
    pub step_nu: f64,
    /// Largest admissible action; `None` means four times the power budget.
    pub max_power: Option<f64>,
    /// `false` keeps statistics over every slot since reset instead of the
    /// last `window` slots.
    pub truncate: bool,
}

impl Default for EnvHyper {
    fn default() -> Self {
        EnvHyper {
            window: 300,
            period: 100,
            rho0: 1.0,
            nu0: 1.0,
            step_rho: 1e-3,
            step_nu: 1e-3,
            max_power: None,
            truncate: true,
        }
    }
}

impl EnvHyper {
    fn validate(&self) -> Result<()> {
        if self.window == 0 || self.period == 0 {
            return Err(Error::Config("window and period must be at least one slot".into()));
        }
        for (name, v) in [("rho0", self.rho0), ("nu0", self.nu0), ("step_rho", self.step_rho), ("step_nu", self.step_nu)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if let Some(p) = self.max_power {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Config(format!("max_power must be positive, got {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvState {
    /// Powers already spent on the current message, zero-padded to `M - 1`.
    pub past_powers: Vec<f64>,
    /// 1-based round the next action is used for.
    pub round: usize,
    /// Slots played since reset.
    pub slot: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualState {
    pub rho: f64,
    pub nu: f64,
    pub mbar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transition {
    pub state: EnvState,
    pub action: f64,
    pub reward: f64,
    pub next_state: EnvState,
    pub rate: f64,
    pub round: usize,
    pub success: bool,
    pub final_round_failure: bool,
    pub duals: DualState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowStats {
    /// Power per message: window power over `slots / Mbar`.
    pub avg_power: f64,
    /// Final-round failures over `slots / Mbar`.
    pub final_failure_rate: f64,
    pub mbar: f64,
    pub slots: usize,
}

#[derive(Debug, Clone, Copy)]
struct SlotRecord {
    power: f64,
    nonfinal_failure: bool,
    final_failure: bool,
}

#[derive(Debug, Clone)]
struct Window {
    cap: Option<usize>,
    slots: VecDeque<SlotRecord>,
    // running totals used when nothing ever leaves the window
    total_slots: usize,
    total_power: f64,
    nonfinal: usize,
    finals: usize,
}

impl Window {
    fn new(cap: Option<usize>) -> Self {
        Window { cap, slots: VecDeque::new(), total_slots: 0, total_power: 0.0, nonfinal: 0, finals: 0 }
    }

    fn push(&mut self, r: SlotRecord) {
        match self.cap {
            Some(cap) => {
                if self.slots.len() == cap {
                    let old = self.slots.pop_front().expect("full window");
                    self.nonfinal -= old.nonfinal_failure as usize;
                    self.finals -= old.final_failure as usize;
                }
                self.slots.push_back(r);
                self.total_slots = self.slots.len();
            }
            None => {
                self.total_slots += 1;
                self.total_power += r.power;
            }
        }
        self.nonfinal += r.nonfinal_failure as usize;
        self.finals += r.final_failure as usize;
    }

    fn power_sum(&self) -> f64 {
        match self.cap {
            Some(_) => self.slots.iter().map(|r| r.power).sum(),
            None => self.total_power,
        }
    }

    fn mbar(&self, max_rounds: usize) -> f64 {
        let n = self.total_slots;
        if n == 0 || self.nonfinal >= n {
            return if n == 0 { 1.0 } else { max_rounds as f64 };
        }
        (n as f64 / (n - self.nonfinal) as f64).clamp(1.0, max_rounds as f64)
    }

    fn stats(&self, max_rounds: usize) -> WindowStats {
        let mbar = self.mbar(max_rounds);
        let n = self.total_slots;
        if n == 0 {
            return WindowStats { avg_power: 0.0, final_failure_rate: 0.0, mbar, slots: 0 };
        }
        let messages = n as f64 / mbar;
        WindowStats {
            avg_power: self.power_sum() / messages,
            final_failure_rate: self.finals as f64 / messages,
            mbar,
            slots: n,
        }
    }
}

pub struct Environment {
    link: SystemConfig,
    cons: OptConstraints,
    hyper: EnvHyper,
    max_power: f64,
    rng: Option<ChaCha8Rng>,
    state: EnvState,
    duals: DualState,
    window: Window,
    received: Vec<f64>,
}

impl Environment {
    /// `link` supplies everything but the SNRs, which come from the actions.
    pub fn new(link: SystemConfig, cons: OptConstraints, hyper: EnvHyper) -> Result<Self> {
        link.validate_link()?;
        cons.validate()?;
        hyper.validate()?;
        let max_power = hyper.max_power.unwrap_or(4.0 * cons.max_avg_power);
        let big_m = link.max_rounds;
        Ok(Environment {
            state: EnvState { past_powers: vec![0.0; big_m - 1], round: 1, slot: 0 },
            duals: DualState { rho: hyper.rho0, nu: hyper.nu0, mbar: 1.0 },
            window: Window::new(hyper.truncate.then_some(hyper.window)),
            link,
            cons,
            max_power,
            hyper,
            rng: None,
            received: Vec::with_capacity(big_m),
        })
    }

    pub fn link(&self) -> &SystemConfig {
        &self.link
    }

    pub fn constraints(&self) -> &OptConstraints {
        &self.cons
    }

    pub fn hyper(&self) -> &EnvHyper {
        &self.hyper
    }

    pub fn max_power(&self) -> f64 {
        self.max_power
    }

    pub fn duals(&self) -> &DualState {
        &self.duals
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn is_initialized(&self) -> bool {
        self.rng.is_some()
    }

    pub fn reset(&mut self, seed: u64) -> EnvState {
        let big_m = self.link.max_rounds;
        self.rng = Some(substream(seed, 0));
        self.state = EnvState { past_powers: vec![0.0; big_m - 1], round: 1, slot: 0 };
        self.duals = DualState { rho: self.hyper.rho0, nu: self.hyper.nu0, mbar: 1.0 };
        self.window = Window::new(self.hyper.truncate.then_some(self.hyper.window));
        self.received.clear();
        self.state.clone()
    }

    pub fn step(&mut self, action: f64) -> Result<Transition> {
        if action.is_nan() {
            return Err(Error::Protocol("action is not a number".into()));
        }
        let big_m = self.link.max_rounds;
        let rng = self.rng.as_mut().ok_or_else(|| Error::Protocol("step before reset".into()))?;
        let power = action.clamp(0.0, self.max_power);
        let before = self.state.clone();
        let round = before.round;

        let gain = sample_gain(rng, self.link.gain_mean);
        self.received.push(power / self.link.noise_power * gain);
        let eps = fbl_error_probability(self.received.iter().copied(), self.link.rate, self.link.blocklength);
        let success = rng.gen::<f64>() >= eps;
        let final_failure = !success && round == big_m;
        let rate = if success { self.link.rate } else { 0.0 };

        let d = &self.duals;
        let reward = rate
            + d.rho * (self.cons.max_avg_power - d.mbar * power)
            + d.nu * (self.cons.max_bler - d.mbar * f64::from(u8::from(final_failure)));

        let mut next = before.clone();
        next.slot += 1;
        if success || final_failure {
            next.past_powers.iter_mut().for_each(|p| *p = 0.0);
            next.round = 1;
            self.received.clear();
        } else {
            next.past_powers[round - 1] = power;
            next.round = round + 1;
        }

        self.window.push(SlotRecord { power, nonfinal_failure: !success && round < big_m, final_failure });
        self.duals.mbar = self.window.mbar(big_m);
        if next.slot.is_multiple_of(self.hyper.period as u64) {
            let s = self.window.stats(big_m);
            self.duals.rho = (self.duals.rho - self.hyper.step_rho * (self.cons.max_avg_power - s.avg_power)).max(0.0);
            self.duals.nu = (self.duals.nu - self.hyper.step_nu * (self.cons.max_bler - s.final_failure_rate)).max(0.0);
        }
        self.state = next.clone();
        Ok(Transition {
            state: before,
            action: power,
            reward,
            next_state: next,
            rate,
            round,
            success,
            final_round_failure: final_failure,
            duals: self.duals.clone(),
        })
    }

    pub fn window_stats(&self) -> WindowStats {
        self.window.stats(self.link.max_rounds)
    }
}

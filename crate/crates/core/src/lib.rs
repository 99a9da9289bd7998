//! Numerical laboratory for HARQ with incremental redundancy over Rayleigh
//! block fading in the finite-blocklength regime.
//!
//! The crate evaluates the average block error rate (BLER) after `m` HARQ
//! rounds with several independent methods:
//!
//! * [`mc`]: Monte Carlo over the fading gains, plus an event-level link
//!   simulator for throughput.
//! * [`quad`]: trapezoidal rule, plain Gauss–Laguerre tensor sums and the
//!   multiset-cached Gauss–Laguerre dynamic program.
//! * [`asy`]: the high-SNR closed form `G_M / prod(snr_m)`.
//!
//! On top of these sit long-term average throughput bookkeeping ([`ltat`]),
//! geometric-programming power allocation ([`gpopt`]) and a constrained-MDP
//! environment with a line-delimited JSON server ([`env`]) for external
//! reinforcement-learning trainers.

pub mod asy;
pub mod env;
pub mod error;
pub mod gpopt;
pub mod integrate;
pub mod ltat;
pub mod mc;
pub mod model;
pub mod quad;

pub use error::{Error, Infeasibility, Result};

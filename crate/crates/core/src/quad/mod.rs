//! Deterministic evaluators of the recursive average-BLER integral under the
//! high-SNR error model `Q((S_m - R) / (sqrt(m) V))`.
//!
//! With `S_m = C_1 + ... + C_m` the accumulated capacity, the average BLER
//! after `M` rounds is `phi_0(0)` where `phi_M = 1` and
//!
//! ```text
//! phi_m(s) = int_0^inf Q_{m+1}(s + x) f_{C_{m+1}}(x) phi_{m+1}(s + x) dx.
//! ```
//!
//! The evaluators differ only in how each single-fold integral is discretised
//! and in how intermediate values are cached; each returns an [`EvalCounter`]
//! so the work can be compared against the closed-form counts in
//! [`complexity`].

pub mod complexity;
mod gauss;
mod laguerre;
mod trapezoid;

pub use complexity::{binomial, complexity_report, ComplexityRow};
pub use gauss::{bler_gl_dp, bler_gl_dp_with_budget, bler_gl_naive, bler_gl_naive_with_budget, DEFAULT_BUDGET};
pub use laguerre::{gl_rule, laguerre, GlRule, MAX_ORDER};
pub use trapezoid::{bler_trapezoid, truncation_bound, TrapezoidConfig};

use serde::Serialize;

/// Work done by one evaluation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EvalCounter {
    /// Calls to the Gaussian tail function.
    pub q_evals: u64,
    /// Trapezoid only: tabulated `phi_m` values for `1 <= m <= M-1`, i.e.
    /// `(K+1) + 2(K+1) + ... + (M-1)(K+1)`.
    pub psi_evals: u64,
    /// Cached intermediate values (`phi_m` table entries, including `phi_0`).
    pub cache_entries: u64,
    /// Distinct abscissae per layer `m = 1..M` (grid points or node multisets).
    pub layer_sizes: Vec<u64>,
}

/// Value of one evaluator at `m = M` plus its work counters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadOutcome {
    pub value: f64,
    pub counter: EvalCounter,
}

//! Power allocation on the high-SNR model, where `P_m ~ G_m / prod_{i<=m} P_i`
//! (noise power folded into `G_m`). Throughput is maximised by minimising
//!
//! ```text
//! f(P)  = sum_{m=1}^{M-1} G_m prod_{i<=m} P_i^-1
//! s.t.  sum_{m=1}^{M} G_{m-1} P_m prod_{i<m} P_i^-1 <= Pbar   (G_0 = 1)
//!       G_M prod_m P_m^-1 <= pmax
//! ```
//!
//! With `y = ln P` the objective and power constraint become log-sum-exp
//! functions and the BLER constraint becomes affine, so a log-barrier
//! interior-point method with Newton steps solves it.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::asy::{asymptotic_coeffs, AsymptoticCoeffs};
use crate::error::{Error, Infeasibility, Result};
use crate::ltat::{avg_power, report_from_curve, OptConstraints, PowerPolicy};
use crate::mc::{estimate_bler, BlerCurve, BlerMethod, ErrorModel, LtatReport};
use crate::model::{db_to_linear, SystemConfig};
use crate::quad::{bler_gl_dp, gl_rule};

/// `log sum_k exp(a_k . y + b_k)`.
#[derive(Debug, Clone)]
struct LogSumExp {
    a: Vec<DVector<f64>>,
    b: Vec<f64>,
}

impl LogSumExp {
    fn value(&self, y: &DVector<f64>) -> f64 {
        let z: Vec<f64> = self.a.iter().zip(&self.b).map(|(a, b)| a.dot(y) + b).collect();
        let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        top + z.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
    }

    fn derivatives(&self, y: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let n = y.len();
        let z: Vec<f64> = self.a.iter().zip(&self.b).map(|(a, b)| a.dot(y) + b).collect();
        let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - top).exp()).collect();
        let total: f64 = e.iter().sum();
        let mut grad = DVector::zeros(n);
        let mut second = DMatrix::zeros(n, n);
        for (a, w) in self.a.iter().zip(&e) {
            let p = w / total;
            grad += a * p;
            second += a * a.transpose() * p;
        }
        let hess = second - &grad * grad.transpose();
        (top + total.ln(), grad, hess)
    }
}

/// The three log-space functions of one problem instance.
struct Problem {
    objective: Option<LogSumExp>,
    power: LogSumExp,
    bler: LogSumExp,
    g: Vec<f64>,
}

impl Problem {
    fn new(g: &[f64], cons: OptConstraints) -> Self {
        let big_m = g.len();
        let unit = |m: usize, sign: f64| DVector::from_fn(big_m, |i, _| if i < m { sign } else { 0.0 });
        let objective = (big_m > 1).then(|| LogSumExp {
            a: (1..big_m).map(|m| unit(m, -1.0)).collect(),
            b: g[..big_m - 1].iter().map(|v| v.ln()).collect(),
        });
        let power = LogSumExp {
            a: (1..=big_m)
                .map(|m| {
                    let mut a = unit(m - 1, -1.0);
                    a[m - 1] = 1.0;
                    a
                })
                .collect(),
            b: (1..=big_m)
                .map(|m| if m == 1 { 0.0 } else { g[m - 2].ln() } - cons.max_avg_power.ln())
                .collect(),
        };
        let bler = LogSumExp { a: vec![unit(big_m, -1.0)], b: vec![g[big_m - 1].ln() - cons.max_bler.ln()] };
        Problem { objective, power, bler, g: g.to_vec() }
    }

    fn objective_value(&self, p: &[f64]) -> f64 {
        let mut prod = 1.0;
        let mut total = 0.0;
        for m in 0..p.len() - 1 {
            prod *= p[m];
            total += self.g[m] / prod;
        }
        total
    }

    fn power_used(&self, p: &[f64]) -> f64 {
        let mut prod = 1.0;
        let mut total = 0.0;
        for m in 0..p.len() {
            total += if m == 0 { 1.0 } else { self.g[m - 1] } * p[m] / prod;
            prod *= p[m];
        }
        total
    }

    fn bler_value(&self, p: &[f64]) -> f64 {
        self.g[p.len() - 1] / p.iter().product::<f64>()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BarrierSettings {
    pub t0: f64,
    pub mu: f64,
    /// Stop once the duality measure `constraints / t` falls below this.
    pub gap: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        BarrierSettings { t0: 1.0, mu: 10.0, gap: 1e-9, newton_tol: 1e-14, max_newton: 200 }
    }
}

struct BarrierOutcome {
    y: DVector<f64>,
    t: f64,
    newton_steps: usize,
    /// Centre found for each barrier weight, in order.
    path: Vec<DVector<f64>>,
}

/// Minimises `objective` subject to `constraints[i](y) <= 0` from a strictly
/// feasible `y0`.
fn barrier(
    objective: &LogSumExp,
    constraints: &[&LogSumExp],
    y0: DVector<f64>,
    settings: &BarrierSettings,
) -> BarrierOutcome {
    let merit = |y: &DVector<f64>, t: f64| -> f64 {
        let mut v = t * objective.value(y);
        for c in constraints {
            let g = c.value(y);
            if !(g < 0.0) {
                return f64::INFINITY;
            }
            v -= (-g).ln();
        }
        v
    };
    let mut y = y0;
    let mut t = settings.t0;
    let mut newton_steps = 0;
    let mut path = Vec::new();
    loop {
        for _ in 0..settings.max_newton {
            let (_, g0, h0) = objective.derivatives(&y);
            let mut grad = g0 * t;
            let mut hess = h0 * t;
            for c in constraints {
                let (v, gc, hc) = c.derivatives(&y);
                let s = -v;
                hess += hc / s + &gc * gc.transpose() / (s * s);
                grad += gc / s;
            }
            // at large t the system loses rank numerically; stop refining there
            let step = match hess.clone().cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => match hess.clone().lu().solve(&(-&grad)) {
                    Some(step) => step,
                    None => break,
                },
            };
            let decrement = -grad.dot(&step);
            if decrement / 2.0 <= settings.newton_tol {
                break;
            }
            let here = merit(&y, t);
            let mut alpha = 1.0;
            loop {
                let trial = &y + &step * alpha;
                if merit(&trial, t) <= here - 0.25 * alpha * decrement {
                    y = trial;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-20 {
                    break;
                }
            }
            newton_steps += 1;
            if alpha < 1e-20 {
                break;
            }
        }
        path.push(y.clone());
        if constraints.len() as f64 / t <= settings.gap {
            return BarrierOutcome { y, t, newton_steps, path };
        }
        t *= settings.mu;
    }
}

fn stationarity(objective: &LogSumExp, constraints: &[&LogSumExp], y: &DVector<f64>, duals: &[f64]) -> DVector<f64> {
    let (_, mut g, _) = objective.derivatives(y);
    for (c, l) in constraints.iter().zip(duals) {
        g += c.derivatives(y).1 * *l;
    }
    g
}

/// Newton on the KKT equations for each candidate active set, starting from
/// the barrier point. Returns the best valid candidate (feasible,
/// non-negative multipliers) or the barrier point itself, with its
/// stationarity residual.
fn polish(
    objective: &LogSumExp,
    constraints: &[&LogSumExp],
    y0: DVector<f64>,
    duals0: Vec<f64>,
) -> (DVector<f64>, f64) {
    let mut best = (stationarity(objective, constraints, &y0, &duals0).norm(), y0.clone());
    for mask in 1..(1u32 << constraints.len()) {
        let active: Vec<usize> = (0..constraints.len()).filter(|i| mask & (1 << i) != 0).collect();
        if let Some((y, residual)) = kkt_newton(objective, constraints, &y0, &duals0, &active) {
            if residual < best.0 {
                best = (residual, y);
            }
        }
    }
    (best.1, best.0)
}

fn kkt_newton(
    objective: &LogSumExp,
    constraints: &[&LogSumExp],
    y0: &DVector<f64>,
    duals0: &[f64],
    active: &[usize],
) -> Option<(DVector<f64>, f64)> {
    let n = y0.len();
    let k = active.len();
    let mut y = y0.clone();
    let mut duals: Vec<f64> =
        duals0.iter().enumerate().map(|(i, d)| if active.contains(&i) { *d } else { 0.0 }).collect();
    for _ in 0..30 {
        let (_, mut grad, mut hess) = objective.derivatives(&y);
        let mut jac = DMatrix::zeros(k, n);
        let mut vals = DVector::zeros(k);
        for (row, &i) in active.iter().enumerate() {
            let (v, gc, hc) = constraints[i].derivatives(&y);
            hess += hc * duals[i];
            grad += &gc * duals[i];
            jac.row_mut(row).copy_from(&gc.transpose());
            vals[row] = v;
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&hess);
        kkt.view_mut((0, n), (n, k)).copy_from(&jac.transpose());
        kkt.view_mut((n, 0), (k, n)).copy_from(&jac);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-&grad));
        rhs.rows_mut(n, k).copy_from(&(-&vals));
        let step = kkt.lu().solve(&rhs)?;
        if !step.iter().all(|v| v.is_finite()) {
            return None;
        }
        y += step.rows(0, n);
        for (row, &i) in active.iter().enumerate() {
            duals[i] += step[n + row];
        }
        if step.norm() < 1e-15 * (1.0 + y.norm()) {
            break;
        }
    }
    // pull a rounding-level violation back onto the boundary
    for c in constraints {
        let v = c.value(&y);
        if v > 0.0 {
            let dir = c.derivatives(&y).1;
            y -= &dir * (v / dir.norm_squared());
        }
    }
    let valid = constraints.iter().all(|c| c.value(&y) <= 1e-12) && duals.iter().all(|&d| d >= 0.0);
    valid.then(|| {
        let residual = stationarity(objective, constraints, &y, &duals).norm();
        (y, residual)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GpSolution {
    pub policy: PowerPolicy,
    /// `sum_{m<M} G_m / prod_{i<=m} P_i`.
    pub objective: f64,
    /// Average power under the high-SNR model.
    pub power_used: f64,
    /// `G_M / prod P_m`.
    pub bler: f64,
    /// `Pbar - power_used`.
    pub power_slack: f64,
    /// `pmax - bler`.
    pub bler_slack: f64,
    /// Norm of the Lagrangian gradient in log space at the barrier duals.
    pub kkt_residual: f64,
    pub newton_steps: usize,
}

#[derive(Debug, Clone, Default)]
pub struct GpOptions {
    /// Starting powers (watts); must satisfy the BLER bound strictly.
    pub start: Option<Vec<f64>>,
    pub barrier: BarrierSettings,
}

pub fn solve_gp(coeffs: &AsymptoticCoeffs, cons: &OptConstraints) -> Result<GpSolution> {
    solve_gp_with(coeffs, cons, 1.0, &GpOptions::default())
}

/// `noise_power` rescales `G_m` to `G_m N0^m` so powers are in watts.
pub fn solve_gp_with(
    coeffs: &AsymptoticCoeffs,
    cons: &OptConstraints,
    noise_power: f64,
    opts: &GpOptions,
) -> Result<GpSolution> {
    cons.validate()?;
    let g: Vec<f64> = coeffs.g.iter().enumerate().map(|(i, g)| g * noise_power.powi(i as i32 + 1)).collect();
    if g.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Domain("BLER constants must be positive".into()));
    }
    let big_m = g.len();
    let prob = Problem::new(&g, *cons);

    if big_m == 1 {
        let p = cons.max_avg_power;
        let bler = g[0] / p;
        if bler > cons.max_bler {
            return Err(Error::Infeasible(Infeasibility {
                constraint: "bler",
                best_achievable: bler,
                limit: cons.max_bler,
            }));
        }
        return Ok(GpSolution {
            policy: PowerPolicy::new(vec![p])?,
            objective: 0.0,
            power_used: p,
            bler,
            power_slack: 0.0,
            bler_slack: cons.max_bler - bler,
            kkt_residual: 0.0,
            newton_steps: 0,
        });
    }

    // phase I: least power subject to the BLER bound, from a point that meets
    // the bound strictly
    let start = match &opts.start {
        Some(p) => {
            PowerPolicy::new(p.clone())?.check_len(big_m)?;
            if p.iter().any(|v| *v <= 0.0) || prob.bler_value(p) >= cons.max_bler {
                return Err(Error::Domain("starting point must meet the BLER bound strictly".into()));
            }
            DVector::from_iterator(big_m, p.iter().map(|v| v.ln()))
        }
        None => {
            let level = 2.0 * (g[big_m - 1] / cons.max_bler).powf(1.0 / big_m as f64);
            DVector::from_element(big_m, level.ln())
        }
    };
    let phase1 = barrier(&prob.power, &[&prob.bler], start, &opts.barrier);
    let p1: Vec<f64> = phase1.y.iter().map(|v| v.exp()).collect();
    let least = prob.power_used(&p1);
    if least >= cons.max_avg_power {
        return Err(Error::Infeasible(Infeasibility {
            constraint: "average power",
            best_achievable: least,
            limit: cons.max_avg_power,
        }));
    }

    let objective = prob.objective.as_ref().expect("M >= 2");
    let constraints = [&prob.power, &prob.bler];
    // the most central phase-I point that already meets the power budget
    let start = phase1
        .path
        .iter()
        .find(|y| prob.power.value(y) < 0.0)
        .cloned()
        .unwrap_or(phase1.y);
    let out = barrier(objective, &constraints, start, &opts.barrier);
    let duals: Vec<f64> = constraints.iter().map(|c| 1.0 / (-out.t * c.value(&out.y))).collect();
    let (y, kkt_residual) = polish(objective, &constraints, out.y, duals);
    let powers: Vec<f64> = y.iter().map(|v| v.exp()).collect();
    let power_used = prob.power_used(&powers);
    let bler = prob.bler_value(&powers);
    Ok(GpSolution {
        objective: prob.objective_value(&powers),
        power_used,
        bler,
        power_slack: cons.max_avg_power - power_used,
        bler_slack: cons.max_bler - bler,
        kkt_residual,
        newton_steps: phase1.newton_steps + out.newton_steps,
        policy: PowerPolicy::new(powers)?,
    })
}

/// Uniform grid in dB, the same on every axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub lo_db: f64,
    pub hi_db: f64,
    pub points: usize,
}

pub const GRID_MAX_POINTS: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub policy: PowerPolicy,
    pub objective: f64,
    pub evaluated: u64,
    pub feasible: u64,
}

/// Exhaustive search of the same problem over a dB grid; at most three
/// rounds and [`GRID_MAX_POINTS`] points.
pub fn grid_search(coeffs: &AsymptoticCoeffs, cons: &OptConstraints, grid: &GridSpec) -> Result<GridResult> {
    cons.validate()?;
    let big_m = coeffs.max_rounds;
    if big_m > 3 {
        return Err(Error::Config(format!("grid search supports at most 3 rounds, got {big_m}")));
    }
    if grid.points < 2 || !(grid.hi_db > grid.lo_db) {
        return Err(Error::Config("grid needs at least two points and hi > lo".into()));
    }
    let total = (grid.points as u128).pow(big_m as u32);
    if total > GRID_MAX_POINTS {
        return Err(Error::Budget { what: "grid points", needed: total, limit: GRID_MAX_POINTS });
    }
    let prob = Problem::new(&coeffs.g, *cons);
    let axis: Vec<f64> = (0..grid.points)
        .map(|k| db_to_linear(grid.lo_db + (grid.hi_db - grid.lo_db) * k as f64 / (grid.points - 1) as f64))
        .collect();
    let mut idx = vec![0usize; big_m];
    let mut p = vec![0.0; big_m];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut least_violation = f64::INFINITY;
    let (mut evaluated, mut feasible) = (0u64, 0u64);
    'outer: loop {
        for (v, &i) in p.iter_mut().zip(&idx) {
            *v = axis[i];
        }
        evaluated += 1;
        let power = prob.power_used(&p);
        if prob.bler_value(&p) <= cons.max_bler {
            least_violation = least_violation.min(power);
            if power <= cons.max_avg_power {
                feasible += 1;
                let f = prob.objective_value(&p);
                if best.as_ref().is_none_or(|(b, _)| f < *b) {
                    best = Some((f, p.clone()));
                }
            }
        }
        for k in (0..big_m).rev() {
            idx[k] += 1;
            if idx[k] < grid.points {
                continue 'outer;
            }
            idx[k] = 0;
        }
        break;
    }
    match best {
        Some((objective, powers)) => Ok(GridResult { policy: PowerPolicy::new(powers)?, objective, evaluated, feasible }),
        None => Err(Error::Infeasible(Infeasibility {
            constraint: "average power",
            best_achievable: least_violation,
            limit: cons.max_avg_power,
        })),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backend {
    Mc { samples: u64, seed: u64 },
    GlDp { order: usize },
    Asy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyEvaluation {
    pub report: LtatReport,
    pub curve: BlerCurve,
    /// `Pbar - avg_power`.
    pub power_slack: f64,
    /// `pmax - P_M`.
    pub bler_slack: f64,
    pub power_ok: bool,
    pub bler_ok: bool,
}

/// BLER curve of `policy` by the chosen backend, then throughput and
/// constraint slacks. Deterministic backends need every power positive.
pub fn evaluate_policy(
    policy: &PowerPolicy,
    cfg: &SystemConfig,
    cons: &OptConstraints,
    backend: Backend,
) -> Result<PolicyEvaluation> {
    cons.validate()?;
    let link = cfg.clone().with_powers(&policy.powers)?;
    let curve = match backend {
        Backend::Mc { samples, seed } => estimate_bler(&link, samples, ErrorModel::Exact, seed)?,
        Backend::Asy => {
            let coeffs = asymptotic_coeffs(&link)?;
            let values = (1..=link.max_rounds).map(|m| coeffs.bler_at(m, &link.snr).clamp(0.0, 1.0)).collect();
            BlerCurve::deterministic(values, BlerMethod::Asymptotic, None)
        }
        Backend::GlDp { order } => {
            let rule = gl_rule(order)?;
            let mut values = Vec::with_capacity(link.max_rounds);
            let mut q = 0;
            for m in 1..=link.max_rounds {
                let out = bler_gl_dp(&link.truncated(m)?, &rule)?;
                q += out.counter.q_evals;
                values.push(out.value.clamp(0.0, 1.0));
            }
            BlerCurve::deterministic(values, BlerMethod::GlDp, Some(q))
        }
    };
    let report = report_from_curve(link.rate, policy, &curve)?;
    let power = avg_power(policy, &curve.values)?;
    let power_slack = cons.max_avg_power - power;
    let bler_slack = cons.max_bler - curve.final_value();
    Ok(PolicyEvaluation { report, curve, power_slack, bler_slack, power_ok: power_slack >= 0.0, bler_ok: bler_slack >= 0.0 })
}

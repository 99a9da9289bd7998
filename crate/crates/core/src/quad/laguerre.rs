use serde::Serialize;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 64;

/// Gauss-Laguerre rule for `int_0^inf e^{-x} f(x) dx`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlRule {
    pub order: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// `(L_n(x), L_{n-1}(x))` by the three-term recurrence. `L_{-1}` is taken as 0.
pub fn laguerre(n: usize, x: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// `L_n(x)` with the recurrence carried in double-double arithmetic, so that
/// cancellation near a root does not limit the final Newton correction.
fn laguerre_compensated(n: usize, x: f64) -> f64 {
    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }
    fn two_prod(a: f64, b: f64) -> (f64, f64) {
        let p = a * b;
        (p, a.mul_add(b, -p))
    }
    fn add(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
        let (s, e) = two_sum(a.0, b.0);
        let e = e + a.1 + b.1;
        two_sum(s, e)
    }
    fn mul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
        let (p, e) = two_prod(a.0, b.0);
        two_sum(p, e + a.0 * b.1 + a.1 * b.0)
    }
    fn div(a: (f64, f64), d: f64) -> (f64, f64) {
        let q = a.0 / d;
        let (p, e) = two_prod(q, d);
        let r = (a.0 - p - e + a.1) / d;
        two_sum(q, r)
    }
    let (mut prev, mut cur) = ((0.0, 0.0), (1.0, 0.0));
    for k in 0..n {
        let kf = k as f64;
        let coef = two_sum(2.0 * kf + 1.0, -x);
        let t = add(mul(coef, cur), mul((-kf, 0.0), prev));
        prev = cur;
        cur = div(t, kf + 1.0);
    }
    cur.0 + cur.1
}

/// Root of `L_n` inside `(lo, hi)`, where `L_n` changes sign exactly once.
fn bracketed_root(n: usize, mut lo: f64, mut hi: f64) -> f64 {
    let sign_lo = laguerre(n, lo).0.signum();
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (p, q) = laguerre(n, x);
        if p == 0.0 {
            return x;
        }
        if p.signum() == sign_lo {
            lo = x;
        } else {
            hi = x;
        }
        let dp = n as f64 * (p - q) / x;
        let newton = x - p / dp;
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= 1e-16 * x.max(1e-300) || hi - lo <= 4.0 * f64::EPSILON * x {
            return next;
        }
        x = next;
    }
    x
}

fn roots(n: usize) -> Vec<f64> {
    // roots of L_n interlace those of L_{n-1}; all lie below 4n + 6
    let mut rs: Vec<f64> = Vec::new();
    for k in 1..=n {
        let mut edges = Vec::with_capacity(k + 1);
        edges.push(0.0);
        edges.extend_from_slice(&rs);
        edges.push(4.0 * k as f64 + 6.0);
        rs = edges.windows(2).map(|w| bracketed_root(k, w[0], w[1])).collect();
    }
    for x in rs.iter_mut() {
        for _ in 0..2 {
            let (p, q) = laguerre(n, *x);
            let dp = n as f64 * (p - q) / *x;
            *x -= laguerre_compensated(n, *x) / dp;
        }
    }
    rs
}

/// Nodes are the roots of `L_N` (ascending); weights `xi / ((N+1)^2 L_{N+1}(xi)^2)`.
pub fn gl_rule(order: usize) -> Result<GlRule> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::Config(format!("Gauss-Laguerre order must lie in [1, {MAX_ORDER}], got {order}")));
    }
    let nodes = roots(order);
    let np1 = (order + 1) as f64;
    let weights = nodes
        .iter()
        .map(|&x| {
            let l = laguerre(order + 1, x).0;
            x / (np1 * np1 * l * l)
        })
        .collect();
    Ok(GlRule { order, nodes, weights })
}

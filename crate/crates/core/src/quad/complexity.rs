//! Closed-form evaluation counts of the two Gauss-Laguerre evaluators.

use serde::Serialize;

/// `C(n, k)`, or `None` on `u128` overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k as u128 {
        // exact: acc * (n-k+i) is divisible by i
        acc = acc.checked_mul((n - k) as u128 + i)? / i;
    }
    Some(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityRow {
    pub m: u32,
    pub n: u32,
    /// `M N^M`, `None` past `u128`.
    pub naive: Option<u128>,
    /// `C(M+N, N) - 1`.
    pub dp: Option<u128>,
    /// `dp M! / N^M`, which tends to 1 as `N` grows.
    pub ratio: f64,
}

pub fn complexity_report(m: u32, n: u32) -> ComplexityRow {
    let naive = (n as u128).checked_pow(m).and_then(|p| p.checked_mul(m as u128));
    let dp = binomial((m + n) as u64, n as u64).map(|b| b - 1);
    // C(M+N, N) M! = prod_{k=1..M} (N + k)
    let nf = n as f64;
    let lead: f64 = (1..=m).map(|k| 1.0 + k as f64 / nf).product();
    let correction: f64 = (1..=m).map(|k| k as f64 / nf).product();
    ComplexityRow { m, n, naive, dp, ratio: lead - correction }
}
